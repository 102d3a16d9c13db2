"""Decision-based building blocks and the HSJA / QEBA attacks."""

from __future__ import annotations

from typing import Callable

import numpy as np
from scipy import ndimage

from ..core import NormKind, distance, unit_sphere
from .base import Attack, AttackKind, InitFailure


def raw_tol(tol: float, budget, d: int) -> float:
    """Convert a tolerance quoted in budget units to raw L2 units."""
    if budget.norm is NormKind.L2 and budget.normalized:
        return tol * np.sqrt(d)
    return tol


def bisect_boundary(x_adv, x_vic, phi: Callable, tol: float):
    """Binary search on the segment from ``x_vic`` (clean) to ``x_adv``.

    ``phi`` returns True (adversarial), False, or None when the query was
    refused, which ends the search early. Stops once the adversarial and
    clean brackets are within ``tol`` (L2). Returns ``(point, refused)``
    where ``point`` is the last adversarial bracket.
    """
    x_adv = np.asarray(x_adv, dtype=np.float64)
    x_vic = np.asarray(x_vic, dtype=np.float64)
    length = float(np.linalg.norm((x_adv - x_vic).ravel()))
    lo, hi = 0.0, 1.0
    best = x_adv
    while (hi - lo) * length > tol:
        mid = 0.5 * (lo + hi)
        point = (1.0 - mid) * x_vic + mid * x_adv
        verdict = phi(point)
        if verdict is None:
            return best, True
        if verdict:
            hi, best = mid, point
        else:
            lo = mid
    return best, False


def locate_boundary_vanilla(x_adv, x_vic, phi: Callable, tol: float, check_endpoints: bool = False):
    """Bisection to within ``tol`` of the decision boundary.

    With ``check_endpoints`` both ends are queried first and a ValueError
    is raised unless exactly ``x_adv`` is adversarial.
    """
    if check_endpoints and (not phi(x_adv) or phi(x_vic)):
        raise ValueError("segment endpoints lie on the same side of the boundary")
    point, _ = bisect_boundary(x_adv, x_vic, phi, tol)
    return point


def random_adversarial_init(phi: Callable, rng: np.random.Generator, shape, draws: int = 1000,
                            start=None, noise: float = 0.25):
    """Random images until one is adversarial.

    Without ``start`` the draws are uniform images. With it they are
    ``start`` plus uniform noise in ``[-noise, noise]``, which keeps the
    starting point well away from any natural sample.
    """
    for _ in range(draws):
        if start is None:
            u = rng.uniform(size=shape)
        else:
            u = np.clip(start + rng.uniform(-noise, noise, size=shape), 0.0, 1.0)
        if phi(u):
            return u
    raise InitFailure(f"no adversarial start in {draws} draws")


def hsja_gradient(x_t, phi: Callable, zeta: float, n: int, rng: np.random.Generator | None = None,
                  directions=None) -> np.ndarray:
    """Variance-reduced sign estimate of the boundary normal at ``x_t``.

    ``(1 / (zeta n)) * sum_i (phi_i - mean(phi)) u_i`` with phi in {-1, +1}
    and ``u_i`` uniform on the unit sphere. When every phi agrees the
    baseline cancels everything, so the estimate falls back to
    ``mean(phi) * mean(u_i)``.
    """
    x_t = np.asarray(x_t, dtype=np.float64)
    if directions is None:
        if n < 2:
            raise ValueError("need at least two samples")
        directions = unit_sphere(rng, x_t.shape, n)
    values, used = [], []
    for u in directions:
        point = np.clip(x_t + zeta * u, 0.0, 1.0)
        values.append(1.0 if phi(point) else -1.0)
        used.append((point - x_t) / zeta)
    return sign_estimate(np.array(values), np.array(used), zeta)


def sign_estimate(values: np.ndarray, used: np.ndarray, zeta: float) -> np.ndarray:
    baseline = values.mean()
    if abs(baseline) == 1.0:
        return baseline * used.mean(axis=0)
    weights = (values - baseline).reshape(-1, *([1] * (used.ndim - 1)))
    return (weights * used).sum(axis=0) / (zeta * len(values))


def hsja_initial_step(x_t, x_vic, t: int, norm: NormKind = NormKind.L2) -> float:
    """Starting step length ``||x_t - x_vic|| / sqrt(t)``."""
    if t < 1:
        raise ValueError("iteration count starts at 1")
    return distance(x_t, x_vic, norm) / np.sqrt(t)


def upsample(noise: np.ndarray, shape, factor: int) -> np.ndarray:
    """Bilinear upsampling of low-resolution noise batches to ``shape``."""
    if factor == 1:
        return noise
    h, w = shape[0], shape[1]
    zoomed = ndimage.zoom(noise, (1, factor, factor, 1), order=1, mode="nearest", grid_mode=False)
    return zoomed[:, :h, :w, :]


def subspace_directions(rng: np.random.Generator, shape, n: int, factor: int) -> np.ndarray:
    """Unit directions drawn at 1/factor resolution and upsampled.

    Sides that do not divide by ``factor`` are padded up and cropped.
    """
    if factor == 1:
        return unit_sphere(rng, shape, n)
    if len(shape) != 3:
        raise ValueError("subspace sampling needs an (H, W, C) sample")
    h, w, c = shape
    low = rng.standard_normal((n, -(-h // factor), -(-w // factor), c))
    up = upsample(low, shape, factor)
    flat = up.reshape(n, -1)
    flat /= np.linalg.norm(flat, axis=1, keepdims=True)
    return flat.reshape(n, *shape)


def qeba_gradient(x_t, phi: Callable, zeta: float, n: int, rng: np.random.Generator, factor: int = 4) -> np.ndarray:
    return hsja_gradient(x_t, phi, zeta, n, directions=subspace_directions(rng, np.shape(x_t), n, factor))


def unit(v) -> np.ndarray:
    n = np.linalg.norm(np.ravel(v))
    return v / n if n > 0 else v


class HsjaAttack(Attack):
    kind = AttackKind.HSJA

    @property
    def tol(self) -> float:
        return raw_tol(self.p["tol"], self.budget, self.dim)

    def phi(self, x) -> bool:
        return self.oracle.phi(self.oracle.ask(x))

    def directions(self, n: int) -> np.ndarray:
        return unit_sphere(self.rng, self.shape, n)

    def initial_point(self):
        return random_adversarial_init(self.phi, self.rng, self.shape, self.p["init_draws"],
                                       self.start, self.p["init_noise"])

    def run(self) -> None:
        x = self.locate_boundary(self.initial_point())
        t = 0
        while True:
            t += 1
            dist = float(np.linalg.norm((x - self.x_vic).ravel()))
            n = int(min(self.p["n0"] * np.sqrt(t), self.p["n_max"]))
            zeta = self.p["gamma"] * dist / self.dim
            grad = self.estimate_gradient(x, zeta, n)
            x = self.locate_boundary(self.take_step(x, grad, t))

    def estimate_gradient(self, x, zeta: float, n: int) -> np.ndarray:
        return hsja_gradient(x, self.phi, zeta, n, directions=self.directions(n))

    def take_step(self, x, grad, t: int):
        """Geometric search along the estimate for an adversarial point."""
        direction = unit(grad)
        lam = hsja_initial_step(x, self.x_vic, t)
        for _ in range(self.p["max_halvings"]):
            cand = np.clip(x + lam * direction, 0.0, 1.0)
            if self.phi(cand):
                return cand
            lam /= 2.0
        return x

    def locate_boundary(self, x_adv):
        return locate_boundary_vanilla(x_adv, self.x_vic, self.phi, self.tol)


class QebaAttack(HsjaAttack):
    kind = AttackKind.QEBA

    def directions(self, n: int) -> np.ndarray:
        return subspace_directions(self.rng, self.shape, n, int(self.p["factor"]))
