"""Shared value types, norms, projections and seeded randomness.

Samples are plain float64 numpy arrays with values in [0, 1]. Image-like
samples carry their (height, width, channels) shape; flat samples are 1-D.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np


class NormKind(enum.Enum):
    L2 = "l2"
    LINF = "linf"

    @classmethod
    def parse(cls, value: "str | NormKind") -> "NormKind":
        if isinstance(value, NormKind):
            return value
        key = str(value).lower().replace("_", "")
        if key in ("l2", "2"):
            return cls.L2
        if key in ("linf", "inf", "li"):
            return cls.LINF
        raise ValueError(f"unknown norm {value!r}")


@dataclass(frozen=True)
class PerturbationBudget:
    """An epsilon-ball. ``normalized`` divides L2 distances by sqrt(d)."""

    norm: NormKind
    epsilon: float
    normalized: bool = False

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")

    def radius(self, d: int) -> float:
        """Radius of the ball in raw (unnormalized) distance units."""
        if self.norm is NormKind.L2 and self.normalized:
            return self.epsilon * np.sqrt(d)
        return self.epsilon

    def contains(self, x, center, tol: float = 1e-9) -> bool:
        return distance(x, center, self.norm, self.normalized) <= self.epsilon + tol


class OutcomeKind(enum.Enum):
    SOFT = "soft"
    HARD = "hard"
    REJECTED = "rejected"
    BANNED = "banned"


@dataclass(frozen=True)
class QueryOutcome:
    """What a (possibly defended) endpoint returns for one query."""

    kind: OutcomeKind
    probs: np.ndarray | None = field(default=None, compare=False)
    label: int | None = None

    def __post_init__(self):
        if self.kind is OutcomeKind.SOFT:
            p = np.asarray(self.probs, dtype=float)
            if p.ndim != 1 or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-6:
                raise ValueError("soft outcome must be a probability vector")
            object.__setattr__(self, "probs", p)
            object.__setattr__(self, "label", int(np.argmax(p)))
        elif self.kind is OutcomeKind.HARD and self.label is None:
            raise ValueError("hard outcome needs a label")

    @classmethod
    def soft(cls, probs) -> "QueryOutcome":
        return cls(OutcomeKind.SOFT, probs=probs)

    @classmethod
    def hard(cls, label: int) -> "QueryOutcome":
        return cls(OutcomeKind.HARD, label=int(label))

    @classmethod
    def rejected(cls) -> "QueryOutcome":
        return cls(OutcomeKind.REJECTED)

    @classmethod
    def banned(cls) -> "QueryOutcome":
        return cls(OutcomeKind.BANNED)

    @property
    def answered(self) -> bool:
        return self.kind in (OutcomeKind.SOFT, OutcomeKind.HARD)

    @property
    def actioned(self) -> bool:
        return not self.answered


def make_sample(data, shape=None) -> np.ndarray:
    """Validate ``data`` as a sample and return it as a float64 array.

    ``shape`` may be given to reshape flat data; its product must equal the
    data length.
    """
    x = np.array(data, dtype=np.float64)
    if shape is not None:
        shape = tuple(int(s) for s in shape)
        if int(np.prod(shape)) != x.size:
            raise ValueError(f"shape {shape} does not match {x.size} values")
        x = x.reshape(shape)
    if np.any(~np.isfinite(x)) or np.any(x < 0.0) or np.any(x > 1.0):
        raise ValueError("sample values must lie in [0, 1]")
    return x


def distance(a, b, norm: NormKind | str = NormKind.L2, normalized: bool = False) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    norm = NormKind.parse(norm)
    diff = (a - b).ravel()
    if diff.size == 0:
        return 0.0
    if norm is NormKind.LINF:
        return float(np.max(np.abs(diff)))
    dist = float(np.sqrt(np.dot(diff, diff)))
    if normalized:
        dist /= np.sqrt(diff.size)
    return dist


def budget_distance(a, b, budget: PerturbationBudget) -> float:
    return distance(a, b, budget.norm, budget.normalized)


def project(x, center, budget: PerturbationBudget) -> np.ndarray:
    """Project onto the budget ball around ``center``, then clamp to [0, 1].

    Points already inside both sets come back unchanged (as a copy).
    """
    x = np.asarray(x, dtype=np.float64)
    center = np.asarray(center, dtype=np.float64)
    if x.shape != center.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {center.shape}")
    delta = x - center
    if budget.norm is NormKind.LINF:
        eps = budget.epsilon
        delta = np.clip(delta, -eps, eps)
    else:
        radius = budget.radius(x.size)
        n = np.linalg.norm(delta.ravel())
        # slack keeps a second projection from rescaling by rounding noise
        if n > radius * (1.0 + 1e-12):
            delta = delta * (radius / n)
    out = np.clip(center + delta, 0.0, 1.0)
    # box clamp can only shrink the perturbation, so the result stays in the ball
    return out


def rng_stream(seed: int | np.random.SeedSequence | None) -> np.random.Generator:
    """Deterministic random source; the single entry point for randomness."""
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.PCG64(seed))
    if seed is None:
        raise ValueError("a seed is required for reproducible runs")
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValueError("seed must be a 64-bit unsigned integer")
    return np.random.Generator(np.random.PCG64(seed))


def derive_seed(seed: int, *keys: int) -> np.random.SeedSequence:
    """Seed sequence that depends only on ``seed`` and the integer ``keys``."""
    return np.random.SeedSequence([int(seed), *(int(k) for k in keys)])


def unit_sphere(rng: np.random.Generator, shape, n: int | None = None) -> np.ndarray:
    """Uniform draws on the unit sphere of dimension prod(shape)."""
    if n is None:
        u = rng.standard_normal(shape)
        return u / np.linalg.norm(u.ravel())
    u = rng.standard_normal((n, *tuple(np.atleast_1d(shape))))
    flat = u.reshape(n, -1)
    flat /= np.linalg.norm(flat, axis=1, keepdims=True)
    return flat.reshape(u.shape)
