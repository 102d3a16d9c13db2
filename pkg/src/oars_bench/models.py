"""Black-box classifiers and the procedural task they are evaluated on."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import rng_stream


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


class MlpModel:
    """Dense ReLU network with a softmax head.

    ``layers`` is a list of ``(weights, bias)`` with weights shaped
    ``(out, in)``. A single layer is a linear softmax classifier.
    """

    def __init__(self, layers, input_shape=None):
        if not layers:
            raise ValueError("model needs at least one layer")
        self.layers = []
        prev = None
        for i, (w, b) in enumerate(layers):
            w = np.array(w, dtype=np.float64)
            b = np.array(b, dtype=np.float64).ravel()
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ValueError(f"layer {i}: weights {w.shape} and bias {b.shape} disagree")
            if prev is not None and w.shape[1] != prev:
                raise ValueError(f"layer {i} expects {w.shape[1]} inputs but receives {prev}")
            w.setflags(write=False)
            b.setflags(write=False)
            self.layers.append((w, b))
            prev = w.shape[0]
        self.input_dim = self.layers[0][0].shape[1]
        self.num_classes = self.layers[-1][0].shape[0]
        if input_shape is None:
            input_shape = (self.input_dim,)
        self.input_shape = tuple(int(s) for s in input_shape)
        if int(np.prod(self.input_shape)) != self.input_dim:
            raise ValueError(f"input shape {self.input_shape} does not match {self.input_dim} inputs")

    def logits(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        single = x.shape in (self.input_shape, (self.input_dim,))
        if x.size % self.input_dim:
            raise ValueError(f"expected {self.input_dim} inputs, got {x.size}")
        h = x.reshape(-1, self.input_dim)
        for i, (w, b) in enumerate(self.layers):
            h = h @ w.T + b
            if i < len(self.layers) - 1:
                h = np.maximum(h, 0.0)
        return h[0] if single else h

    def soft_predict(self, x) -> np.ndarray:
        return softmax(self.logits(x))

    def hard_predict(self, x):
        # np.argmax breaks ties toward the lowest index
        return np.argmax(self.soft_predict(x), axis=-1)

    def to_dict(self) -> dict:
        return {
            "layers": [
                {
                    "rows": int(w.shape[0]),
                    "cols": int(w.shape[1]),
                    "weights": [float(v) for v in w.ravel()],
                    "bias": [float(v) for v in b],
                }
                for w, b in self.layers
            ],
            "activation": "relu",
            "final": "softmax",
            "input_shape": list(self.input_shape),
        }


class LinearModel(MlpModel):
    def __init__(self, weights, bias, input_shape=None):
        super().__init__([(weights, bias)], input_shape=input_shape)

    @property
    def weights(self):
        return self.layers[0][0]

    @property
    def bias(self):
        return self.layers[0][1]


def soft_predict(model: MlpModel, x) -> np.ndarray:
    return model.soft_predict(x)


def hard_predict(model: MlpModel, x) -> int:
    return int(model.hard_predict(x))


class LossKind(enum.Enum):
    TARGETED_LOG_PROB = "targeted_log_prob"
    UNTARGETED_MARGIN = "untargeted_margin"


def loss_from_probs(probs: np.ndarray, kind: LossKind, label: int) -> float:
    """Attack loss from a probability vector.

    Targeted: ``log p[label]`` (maximized). Untargeted: margin of the true
    ``label`` over the best other class (minimized below zero).
    """
    probs = np.asarray(probs, dtype=np.float64)
    if not 0 <= label < probs.size:
        raise ValueError(f"label {label} out of range for {probs.size} classes")
    if kind is LossKind.TARGETED_LOG_PROB:
        return float(np.log(max(probs[label], 1e-300)))
    others = np.delete(probs, label)
    return float(probs[label] - np.max(others))


def attack_loss(model: MlpModel, x, kind: LossKind, label: int) -> float:
    return loss_from_probs(model.soft_predict(x), kind, label)


def save_weights(model: MlpModel, path) -> None:
    Path(path).write_text(json.dumps(model.to_dict(), indent=1), encoding="utf-8")


def model_from_dict(doc: dict) -> MlpModel:
    if not isinstance(doc, dict) or "layers" not in doc:
        raise ValueError("weights document needs a 'layers' field")
    if doc.get("activation", "relu") != "relu" or doc.get("final", "softmax") != "softmax":
        raise ValueError("only relu activations with a softmax head are supported")
    layers = []
    for i, layer in enumerate(doc["layers"]):
        try:
            rows, cols = int(layer["rows"]), int(layer["cols"])
            w = np.asarray(layer["weights"], dtype=np.float64)
            b = np.asarray(layer["bias"], dtype=np.float64)
        except (KeyError, TypeError) as exc:
            raise ValueError(f"layer {i} is malformed: {exc}") from exc
        if w.size != rows * cols or b.size != rows:
            raise ValueError(f"layer {i} declares {rows}x{cols} but carries {w.size} weights, {b.size} biases")
        layers.append((w.reshape(rows, cols), b))
    shape = doc.get("input_shape")
    if len(layers) == 1:
        return LinearModel(*layers[0], input_shape=shape)
    return MlpModel(layers, input_shape=shape)


def load_weights(path) -> MlpModel:
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"cannot parse weights file {path}: {exc}") from exc
    return model_from_dict(doc)


# -- procedural task -------------------------------------------------------

@dataclass
class SyntheticTask:
    """Class-patterned images on a shared smooth background.

    A sample of class ``c`` is ``clip(background + amplitude * pattern[c] +
    s * noise)`` where the per-sample noise scale ``s`` is log-uniform in
    ``noise_range``. The bundled model is a template matcher packaged as a
    two-layer ReLU network (``[P; -P]`` hidden units recombined linearly),
    so it is exact by construction rather than trained.
    """

    seed: int
    classes: int
    shape: tuple
    background: np.ndarray
    patterns: np.ndarray
    amplitude: float
    noise_range: tuple
    model: MlpModel = field(repr=False)

    @property
    def dim(self) -> int:
        return int(np.prod(self.shape))

    def sample(self, rng: np.random.Generator, n: int | None = None, label: int | None = None):
        """Draw ``(x, y)``; batched arrays when ``n`` is given."""
        count = 1 if n is None else int(n)
        if label is None:
            y = rng.integers(0, self.classes, size=count)
        else:
            y = np.full(count, int(label))
        lo, hi = self.noise_range
        scale = np.exp(rng.uniform(np.log(lo), np.log(hi), size=count))
        noise = rng.standard_normal((count, *self.shape))
        x = self.background[None] + self.amplitude * self.patterns[y] + scale.reshape(-1, *([1] * len(self.shape))) * noise
        x = np.clip(x, 0.0, 1.0)
        if n is None:
            return x[0], int(y[0])
        return x, y

    def accuracy(self, rng: np.random.Generator, n: int = 1000) -> float:
        x, y = self.sample(rng, n)
        return float(np.mean(self.model.hard_predict(x) == y))


def _smooth_field(rng, shape, terms=4):
    h, w, c = shape
    yy, xx = np.meshgrid(np.arange(h) / h, np.arange(w) / w, indexing="ij")
    out = np.zeros(shape)
    for ch in range(c):
        f = np.zeros((h, w))
        for _ in range(terms):
            kx, ky = rng.uniform(0.3, 1.5, size=2)
            phase = rng.uniform(0, 2 * np.pi)
            f += rng.uniform(0.5, 1.0) * np.cos(2 * np.pi * (kx * xx + ky * yy) + phase)
        f = (f - f.min()) / (np.ptp(f) + 1e-12)
        out[..., ch] = f
    return out


def _class_pattern(rng, shape):
    h, w, c = shape
    yy, xx = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    theta = rng.uniform(0, np.pi)
    freq = rng.uniform(1.5, 4.0) / max(h, w)
    stripes = np.sin(2 * np.pi * freq * (xx * np.cos(theta) + yy * np.sin(theta)) + rng.uniform(0, 2 * np.pi))
    blobs = np.zeros((h, w))
    for _ in range(3):
        cy, cx = rng.uniform(0, h), rng.uniform(0, w)
        r = rng.uniform(1.5, 0.3 * max(h, w))
        blobs += rng.choice([-1.0, 1.0]) * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * r * r))
    field_ = stripes[..., None] + blobs[..., None] + 0.6 * rng.standard_normal((h, w, c))
    return np.where(field_ >= np.median(field_), 1.0, -1.0)


def generate_task(
    seed: int,
    classes: int = 10,
    shape=(16, 16, 1),
    *,
    amplitude: float = 0.03,
    noise_range=(0.02, 0.1),
    sharpness: float = 2.0,
) -> SyntheticTask:
    if classes < 2:
        raise ValueError("a task needs at least two classes")
    shape = tuple(int(s) for s in shape)
    if len(shape) == 2:
        shape = (*shape, 1)
    rng = rng_stream(seed)
    background = 0.15 + 0.7 * _smooth_field(rng, shape)
    patterns = np.stack([_class_pattern(rng, shape) for _ in range(classes)])
    p = patterns.reshape(classes, -1)
    bias = -p @ background.ravel()
    hidden_w = np.vstack([p, -p])
    hidden_b = np.concatenate([bias, -bias])
    out_w = sharpness * np.hstack([np.eye(classes), -np.eye(classes)])
    model = MlpModel([(hidden_w, hidden_b), (out_w, np.zeros(classes))], input_shape=shape)
    return SyntheticTask(seed, classes, shape, background, patterns, amplitude, tuple(noise_range), model)
