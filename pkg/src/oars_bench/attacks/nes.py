"""NES: antithetic Gaussian gradient estimation with signed projected steps."""

from __future__ import annotations

from typing import Callable

import numpy as np

from ..core import PerturbationBudget, project
from .base import Attack, AttackKind


def antithetic_directions(rng: np.random.Generator, shape, n: int) -> np.ndarray:
    """``n`` Gaussian directions ordered as pairs ``u, -u``."""
    if n < 2 or n % 2:
        raise ValueError("antithetic sampling needs an even n >= 2")
    half = rng.standard_normal((n // 2, *shape))
    out = np.empty((n, *shape))
    out[0::2] = half
    out[1::2] = -half
    return out


def nes_gradient(x_t, loss: Callable, sigma: float, n: int, rng: np.random.Generator | None = None,
                 directions=None) -> np.ndarray:
    """``(1 / (sigma n)) * sum_i loss(x_t + sigma u_i) u_i``.

    ``loss`` returns the objective for one sample. Directions are drawn as
    antithetic Gaussian pairs unless given explicitly; any set whose second
    moment ``mean(u u^T)`` is the identity makes the estimate exact for
    linear losses.
    """
    x_t = np.asarray(x_t, dtype=np.float64)
    if directions is None:
        if rng is None:
            raise ValueError("need an rng or explicit directions")
        directions = antithetic_directions(rng, x_t.shape, n)
    directions = np.asarray(directions, dtype=np.float64)
    n = len(directions)
    grad = np.zeros_like(x_t)
    for u in directions:
        grad += loss(x_t + sigma * u) * u
    return grad / (sigma * n)


def nes_step(x_t, grad, lam: float, x_vic, budget: PerturbationBudget) -> np.ndarray:
    """Projected signed step; coordinates with zero gradient stay put."""
    return project(np.asarray(x_t) + lam * np.sign(grad), x_vic, budget)


class NesAttack(Attack):
    kind = AttackKind.NES

    def objective(self, x) -> float:
        return self.oracle.objective(self.oracle.ask(np.clip(x, 0.0, 1.0)))

    def first_query(self, x) -> None:
        self.oracle.ask(x)

    def run(self) -> None:
        x = self.x_vic.copy()
        self.first_query(x)
        while True:
            grad = self.estimate_gradient(x)
            x = self.take_step(x, grad)

    def estimate_gradient(self, x) -> np.ndarray:
        return nes_gradient(x, self.objective, self.p["sigma"], self.p["n"], self.rng)

    def take_step(self, x, grad) -> np.ndarray:
        x_new = nes_step(x, grad, self.p["step"], self.x_vic, self.budget)
        self.oracle.ask(x_new)
        return x_new
