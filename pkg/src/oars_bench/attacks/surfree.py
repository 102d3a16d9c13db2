"""SurFree: geometric search over circles through the clean sample."""

from __future__ import annotations

import numpy as np

from .base import Attack, AttackKind
from .decision import locate_boundary_vanilla, random_adversarial_init, raw_tol, unit

GOLDEN = 0.618


def angle_schedule(theta_max: float, count: int = 8) -> list[float]:
    """Sign-alternating, geometrically shrinking angles (radians)."""
    out = []
    for k in range(count // 2):
        mag = theta_max * GOLDEN ** k
        out += [mag, -mag]
    return out


def orthogonal_direction(rng: np.random.Generator, u, basis: list) -> np.ndarray:
    """Gaussian draw made orthogonal to ``u`` and every vector in ``basis``."""
    v = rng.standard_normal(u.shape)
    for b in [u, *basis]:
        v = v - np.vdot(v, b) * b
    # one more pass keeps the residual inner products at rounding level
    for b in [u, *basis]:
        v = v - np.vdot(v, b) * b
    return unit(v)


def circle_point(x_vic, u, v, radius: float, theta: float) -> np.ndarray:
    """Point at angle ``theta`` on the circle with diameter ``x_vic -> x_vic + radius u``."""
    return x_vic + radius * np.cos(theta) * (np.cos(theta) * u + np.sin(theta) * v)


class SurFreeAttack(Attack):
    kind = AttackKind.SURFREE

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.basis: list = []

    @property
    def tol(self) -> float:
        return raw_tol(self.p["tol"], self.budget, self.dim)

    def phi(self, x) -> bool:
        return self.oracle.phi(self.oracle.ask(x))

    def run(self) -> None:
        x = self.locate_boundary(random_adversarial_init(self.phi, self.rng, self.shape, self.p["init_draws"]))
        while True:
            x = self.iterate(x)

    def new_direction(self, u) -> np.ndarray:
        if len(self.basis) >= min(self.p["basis"], self.dim - 2):
            self.basis.clear()
        v = orthogonal_direction(self.rng, u, self.basis)
        self.basis.append(v)
        return v

    def iterate(self, x):
        diff = x - self.x_vic
        radius = float(np.linalg.norm(diff.ravel()))
        u = diff / radius
        v = self.new_direction(u)
        found = self.take_step(u, v, radius)
        if found is None:
            return x
        return self.locate_boundary(found)

    def angles(self, radius: float) -> list[float]:
        return angle_schedule(np.deg2rad(self.p["theta_max"]), self.p["angles"])

    def point(self, u, v, radius, theta):
        return np.clip(circle_point(self.x_vic, u, v, radius, theta), 0.0, 1.0)

    def take_step(self, u, v, radius: float):
        """First adversarial angle of the schedule, refined by bisection."""
        schedule = self.angles(radius)
        for theta in schedule:
            if self.phi(self.point(u, v, radius, theta)):
                return self.refine(u, v, radius, theta)
        return None

    def refine(self, u, v, radius, theta):
        # adversarial at theta; push the angle outwards while it stays so
        lo, hi = abs(theta), min(2 * abs(theta), np.pi / 2)
        sign = np.sign(theta)
        for _ in range(self.p["bisect"]):
            mid = 0.5 * (lo + hi)
            if self.phi(self.point(u, v, radius, sign * mid)):
                lo = mid
            else:
                hi = mid
        return self.point(u, v, radius, sign * lo)

    def locate_boundary(self, x_adv):
        return locate_boundary_vanilla(x_adv, self.x_vic, self.phi, self.tol)
