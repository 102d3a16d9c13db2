"""Proposal adaptation by oracle-guided bisection, and rejection sampling."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..attacks.base import ElementFailure


class Family(enum.Enum):
    GAUSSIAN_SIGMA = "gaussian_sigma"
    SPHERE_RADIUS = "sphere_radius"
    RADEMACHER_SCALE = "rademacher_scale"
    UNIFORM_TERMINATION = "uniform_termination"
    SQUARE_COUNT = "square_count"


@dataclass(frozen=True)
class ProposalSpec:
    """A one-parameter proposal family with bounds on its parameter.

    Collisions are assumed to become rarer as the parameter grows. Equal
    bounds pin the parameter to a constant.
    """

    family: Family
    lo: float
    hi: float

    def __post_init__(self):
        if self.lo > self.hi:
            raise ValueError(f"bounds out of order: [{self.lo}, {self.hi}]")
        if self.integer and (self.lo != int(self.lo) or self.hi != int(self.hi)):
            raise ValueError("square counts need integer bounds")

    @property
    def integer(self) -> bool:
        return self.family is Family.SQUARE_COUNT

    @property
    def pinned(self) -> bool:
        return self.lo == self.hi

    def draw(self, rng: np.random.Generator, anchor, theta):
        """One sample of the default proposal around ``anchor`` (clipped to the box)."""
        anchor = np.asarray(anchor, dtype=np.float64)
        if self.family is Family.GAUSSIAN_SIGMA:
            step = theta * rng.standard_normal(anchor.shape)
        elif self.family is Family.RADEMACHER_SCALE:
            step = theta * rng.choice([-1.0, 1.0], size=anchor.shape)
        elif self.family is Family.SPHERE_RADIUS:
            u = rng.standard_normal(anchor.shape)
            step = theta * u / np.linalg.norm(u.ravel())
        elif self.family is Family.UNIFORM_TERMINATION:
            u = rng.standard_normal(anchor.shape)
            step = rng.uniform(0.0, theta) * u / np.linalg.norm(u.ravel())
        else:
            raise ValueError("square-count proposals need an attack-specific sampler")
        return np.clip(anchor + step, 0.0, 1.0)


@dataclass(frozen=True)
class AdaptConfig:
    stps: int = 10
    sam: int = 20
    cr: float = 0.0
    retries: int = 5

    def __post_init__(self):
        if self.stps < 1 or self.sam < 1:
            raise ValueError("stps and sam must be at least 1")
        if not 0.0 <= self.cr < 1.0:
            raise ValueError("cr must lie in [0, 1)")
        if self.retries < 0:
            raise ValueError("retries must be nonnegative")


class CollisionProbe:
    """Counts queries sent through ``query`` and reports collision rates.

    ``query(x)`` returns the endpoint's answer, or ``None`` when the
    defense refused it. Every probe is a real query.
    """

    def __init__(self, query: Callable):
        self._query = query
        self.queries = 0
        self.refused = 0

    @classmethod
    def from_predicate(cls, collides: Callable) -> "CollisionProbe":
        """Synthetic endpoint that refuses exactly when ``collides(x)``."""
        return cls(lambda x: None if collides(x) else True)

    def query(self, x):
        self.queries += 1
        out = self._query(x)
        if out is None:
            self.refused += 1
        return out

    def rate(self, samples) -> float:
        samples = list(samples)
        hits = sum(1 for x in samples if self.query(x) is None)
        return hits / len(samples)


def adapt_proposal(spec: ProposalSpec, cfg: AdaptConfig, anchor, probe: CollisionProbe,
                   rng: np.random.Generator | None = None, sampler: Callable | None = None):
    """Bisection for the smallest parameter whose collision rate is <= cr.

    Each step probes ``cfg.sam`` draws at the midpoint; a rate above
    ``cr`` moves the lower bound up, otherwise the upper bound comes down.
    Returns the final upper bound. Continuous parameters take exactly
    ``cfg.stps`` steps; integer ones use ceiling midpoints and stop early
    once the bracket is a single step wide. A pinned spec returns its
    value without probing.
    """
    if spec.pinned:
        return int(spec.lo) if spec.integer else spec.lo
    if sampler is None:
        sampler = lambda r, a, theta: spec.draw(r, a, theta)
    lo, hi = (int(spec.lo), int(spec.hi)) if spec.integer else (float(spec.lo), float(spec.hi))
    for _ in range(cfg.stps):
        if spec.integer:
            if hi - lo <= 1:
                break
            mid = (lo + hi + 1) // 2
        else:
            mid = 0.5 * (lo + hi)
        rate = probe.rate(sampler(rng, anchor, mid) for _ in range(cfg.sam))
        if rate > cfg.cr:
            lo = mid
        else:
            hi = mid
    return hi


def resample_queries(draw: Callable, n: int, retries: int, probe: CollisionProbe):
    """Draw until ``n`` proposals are answered or ``n * (1 + retries)`` are spent.

    ``draw()`` returns one candidate, or a ``(query, tag)`` pair when the
    caller needs something other than the query point back. Returns the
    accepted ``(tag, answer)`` pairs, possibly fewer than ``n``.
    """
    accepted = []
    for _ in range(n * (1 + retries)):
        got = draw()
        x, tag = got if isinstance(got, tuple) else (got, got)
        out = probe.query(x)
        if out is not None:
            accepted.append((tag, out))
            if len(accepted) == n:
                break
    return accepted


def with_recovery(sample: Callable, readapt: Callable, element: str):
    """Run ``sample``; if it returns None re-adapt once and retry, then fail."""
    got = sample()
    if got is not None:
        return got
    readapt()
    got = sample()
    if got is not None:
        return got
    raise ElementFailure(f"{element}: no query accepted after re-adaptation")


def bracket_width(spec: ProposalSpec, cfg: AdaptConfig) -> float:
    """Width of the final bracket for a continuous parameter."""
    return (spec.hi - spec.lo) / 2 ** cfg.stps
