"""Feature extractors: pixel-window hashing, LBP perceptual hashing, encoders."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from ..core import rng_stream
from ..models import MlpModel

FINGERPRINT_SIZE = 50


@dataclass(frozen=True)
class Fingerprint:
    """The 50 numerically smallest window hashes (32-byte digests), sorted."""

    hashes: tuple

    def __post_init__(self):
        if len(self.hashes) != FINGERPRINT_SIZE:
            raise ValueError(f"fingerprint needs {FINGERPRINT_SIZE} hashes, got {len(self.hashes)}")
        if list(self.hashes) != sorted(self.hashes):
            raise ValueError("fingerprint hashes must be sorted")


@dataclass(frozen=True)
class BitSignature:
    bits: np.ndarray = field(compare=False)

    def __eq__(self, other):
        return isinstance(other, BitSignature) and np.array_equal(self.bits, other.bits)

    def __hash__(self):
        return hash(self.bits.tobytes())

    def __len__(self):
        return int(self.bits.size)


@dataclass(frozen=True)
class Embedding:
    vector: np.ndarray = field(compare=False)

    def __eq__(self, other):
        return isinstance(other, Embedding) and np.array_equal(self.vector, other.vector)

    def __hash__(self):
        return hash(self.vector.tobytes())


def quantize(x, q: float) -> np.ndarray:
    """Bucket index ``floor(pixel * 255 / q)`` per value, as bytes."""
    x = np.asarray(x, dtype=np.float64)
    return np.floor(x * 255.0 / q + 1e-9).astype(np.uint8)


@dataclass(frozen=True)
class PixelHash:
    window: int = 20
    quantization: float = 50.0
    stride: int = 1
    salt: bytes = b""

    def __call__(self, x) -> Fingerprint:
        return pixel_hash(x, self.window, self.quantization, self.stride, self.salt)


def pixel_hash(x, w: int = 20, q: float = 50.0, stride: int = 1, salt: bytes | str = b"") -> Fingerprint:
    """Hash every ``w``-byte window of the quantized, row-major pixels.

    Distinct window digests are sorted and the 50 smallest form the
    fingerprint. When the sample has fewer than 50 distinct windows the list
    is padded by cycling through the sorted digests.
    """
    if isinstance(salt, str):
        salt = salt.encode()
    flat = quantize(x, q).ravel().tobytes()
    if len(flat) < w:
        raise ValueError(f"sample has {len(flat)} values, fewer than one window of {w}")
    digests = set()
    sha = hashlib.sha256
    for i in range(0, len(flat) - w + 1, stride):
        digests.add(sha(salt + flat[i:i + w]).digest())
    ordered = sorted(digests)
    top = ordered[:FINGERPRINT_SIZE]
    i = 0
    while len(top) < FINGERPRINT_SIZE:
        top.append(ordered[i % len(ordered)])
        i += 1
    return Fingerprint(tuple(sorted(top)))


def default_window(shape) -> int:
    """Window size for a sample shape: 20 for small images, 50 from 224 px up."""
    if len(shape) >= 2 and min(shape[0], shape[1]) >= 224:
        return 50
    return 20


def luminance(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        return x
    if x.ndim != 3:
        raise ValueError("perceptual hashing needs an image-shaped sample")
    if x.shape[2] == 1:
        return x[..., 0]
    if x.shape[2] == 3:
        # Y of YCbCr (ITU-R BT.601)
        return x @ np.array([0.299, 0.587, 0.114])
    return x.mean(axis=2)


_LBP_OFFSETS = ((-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1))


def lbp_codes(gray: np.ndarray) -> np.ndarray:
    """8-neighbour local binary pattern codes with edge replication."""
    padded = np.pad(gray, 1, mode="edge")
    h, w = gray.shape
    codes = np.zeros((h, w), dtype=np.int64)
    for bit, (dy, dx) in enumerate(_LBP_OFFSETS):
        neighbour = padded[1 + dy:1 + dy + h, 1 + dx:1 + dx + w]
        codes |= (neighbour >= gray).astype(np.int64) << bit
    return codes


@dataclass(frozen=True)
class PihaHash:
    block: int = 7
    low_pass: bool = True

    def __call__(self, x) -> BitSignature:
        return piha_hash(x, self.block, self.low_pass)


def piha_hash(x, block: int = 7, low_pass: bool = True) -> BitSignature:
    """Perceptual hash from per-block LBP histograms.

    Pipeline: 3x3 mean filter, luminance, 8-bit rounding, LBP codes, then for
    each ``block x block`` tile (partial tiles at the right/bottom edges are
    kept) a 256-bin histogram thresholded at its median bin count.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim < 2:
        raise ValueError("perceptual hashing needs an image-shaped sample")
    gray = luminance(x)
    h, w = gray.shape
    if h < block or w < block:
        raise ValueError(f"image {h}x{w} is smaller than one {block}x{block} block")
    if low_pass:
        gray = ndimage.uniform_filter(gray, size=3, mode="nearest")
    gray = np.round(np.clip(gray, 0.0, 1.0) * 255.0)
    codes = lbp_codes(gray)
    bits = []
    for r in range(0, h, block):
        for c in range(0, w, block):
            hist = np.bincount(codes[r:r + block, c:c + block].ravel(), minlength=256)
            bits.append(hist > np.median(hist))
    return BitSignature(np.concatenate(bits))


class RandomProjectionEncoder:
    """Seeded linear map to ``dim`` outputs followed by L2 normalisation.

    Projection rows are centred to sum to zero so the embedding ignores the
    global brightness offset shared by every nonnegative image.
    """

    def __init__(self, input_dim: int, dim: int = 32, seed: int = 0):
        rng = rng_stream(seed)
        r = rng.standard_normal((dim, input_dim))
        r -= r.mean(axis=1, keepdims=True)
        self.matrix = r / np.sqrt(input_dim)
        self.input_dim = input_dim
        self.dim = dim

    def __call__(self, x) -> Embedding:
        x = np.asarray(x, dtype=np.float64)
        if x.size != self.input_dim:
            raise ValueError(f"encoder expects {self.input_dim} inputs, got {x.size}")
        return normalize_embedding(self.matrix @ x.ravel())


class ModelEncoder:
    """Uses the logits of a loaded network as the embedding."""

    def __init__(self, model: MlpModel):
        self.model = model
        self.input_dim = model.input_dim
        self.dim = model.num_classes

    def __call__(self, x) -> Embedding:
        x = np.asarray(x, dtype=np.float64)
        if x.size != self.input_dim:
            raise ValueError(f"encoder expects {self.input_dim} inputs, got {x.size}")
        return normalize_embedding(self.model.logits(x.ravel()))


def normalize_embedding(v) -> Embedding:
    v = np.asarray(v, dtype=np.float64)
    n = np.linalg.norm(v)
    if n == 0:
        v = np.zeros_like(v)
        v[0] = 1.0
    else:
        v = v / n
    v.setflags(write=False)
    return Embedding(v)


def encode(x, encoder) -> Embedding:
    return encoder(x)
