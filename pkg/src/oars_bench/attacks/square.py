"""Square attack (LInf): random search over squares filled with +-epsilon."""

from __future__ import annotations

import numpy as np

from ..core import NormKind
from .base import Attack, AttackKind

# iteration marks (for a 10k-iteration run) at which the square fraction halves
_SCHEDULE = (10, 50, 200, 500, 1000, 2000, 4000, 6000, 8000)


def square_fraction(p_init: float, it: int, n_iters: int = 10_000) -> float:
    """Fraction of the image covered by one square at iteration ``it``."""
    it = int(it / n_iters * 10_000)
    halvings = sum(1 for mark in _SCHEDULE if it > mark)
    return p_init / 2 ** halvings


def square_side(p: float, h: int, w: int) -> int:
    return int(min(max(1, round(np.sqrt(p * h * w))), min(h, w) - 1 if min(h, w) > 1 else 1))


def stripes_init(x_vic, eps: float, rng: np.random.Generator) -> np.ndarray:
    """Vertical stripes of +-eps, one sign per column and channel."""
    h, w, c = x_vic.shape
    signs = rng.choice([-1.0, 1.0], size=(1, w, c))
    return np.clip(x_vic + eps * signs, 0.0, 1.0)


def paint_squares(x, x_vic, eps: float, side: int, m: int, rng: np.random.Generator) -> np.ndarray:
    """Copy of ``x`` with ``m`` random squares set to ``x_vic +- eps``."""
    h, w, c = x.shape
    out = x.copy()
    for _ in range(m):
        r = rng.integers(0, h - side + 1)
        q = rng.integers(0, w - side + 1)
        window = out[r:r + side, q:q + side]
        vic = x_vic[r:r + side, q:q + side]
        # redraw until the square actually changes the image
        for _ in range(100):
            fill = np.clip(vic + eps * rng.choice([-1.0, 1.0], size=(1, 1, c)), 0.0, 1.0)
            if np.abs(fill - window).sum() > 1e-7:
                break
        out[r:r + side, q:q + side] = fill
    return out


class SquareAttack(Attack):
    kind = AttackKind.SQUARE

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        if self.budget.norm is not NormKind.LINF:
            raise ValueError("the square attack here is the LInf variant")
        if self.x_vic.ndim != 3:
            raise ValueError("square attack needs an (H, W, C) sample")
        self.it = 0

    @property
    def side(self) -> int:
        h, w, _ = self.shape
        frac = square_fraction(self.p["p_init"], self.it, self.config.query_budget)
        return square_side(frac, h, w)

    def run(self) -> None:
        x, best = self.initial_point()
        while True:
            self.it += 1
            x, best = self.take_step(x, best)

    def initial_point(self):
        x = stripes_init(self.x_vic, self.budget.epsilon, self.rng)
        return x, self.oracle.objective(self.oracle.ask(x))

    def take_step(self, x, best):
        cand = paint_squares(x, self.x_vic, self.budget.epsilon, self.side, 1, self.rng)
        value = self.oracle.objective(self.oracle.ask(cand))
        if value > best:
            return cand, value
        return x, best
