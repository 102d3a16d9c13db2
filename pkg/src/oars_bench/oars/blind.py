"""Randomized affine query blinding."""

from __future__ import annotations

import numpy as np
from scipy import ndimage

MAX_ROTATION_DEG = 10.0
MAX_SHIFT = 0.10
MAX_ZOOM = 0.10


def query_blind(x, s: float, rng: np.random.Generator) -> np.ndarray:
    """Random rotation, shift and zoom scaled by strength ``s`` in [0, 1].

    At full strength: rotation up to 10 degrees, shift up to 10% of each
    side, zoom up to 10%. Bilinear resampling with edge replication.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim not in (2, 3):
        raise ValueError("query blinding needs an image-shaped sample")
    if s == 0:
        return x.copy()
    h, w = x.shape[:2]
    angle = np.deg2rad(rng.uniform(-1.0, 1.0) * MAX_ROTATION_DEG * s)
    shift = rng.uniform(-1.0, 1.0, size=2) * MAX_SHIFT * s * np.array([h, w])
    zoom = 1.0 + rng.uniform(-1.0, 1.0) * MAX_ZOOM * s
    c, sn = np.cos(angle), np.sin(angle)
    # maps output coordinates back to input coordinates
    matrix = np.array([[c, -sn], [sn, c]]) / zoom
    center = np.array([(h - 1) / 2.0, (w - 1) / 2.0])
    offset = center - matrix @ center - shift
    planes = x if x.ndim == 3 else x[..., None]
    out = np.stack(
        [ndimage.affine_transform(planes[..., k], matrix, offset=offset, order=1, mode="nearest")
         for k in range(planes.shape[2])],
        axis=-1,
    )
    out = np.clip(out, 0.0, 1.0)
    return out if x.ndim == 3 else out[..., 0]


class Blinder:
    """Stateful wrapper with its own random stream, for use as an oracle hook."""

    def __init__(self, strength: float, rng: np.random.Generator):
        self.strength = strength
        self.rng = rng

    def __call__(self, x):
        return query_blind(x, self.strength, self.rng)
