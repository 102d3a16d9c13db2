"""Boundary attack: a walk along the decision boundary towards the clean sample."""

from __future__ import annotations

import numpy as np

from .base import Attack, AttackKind
from .decision import locate_boundary_vanilla, random_adversarial_init, raw_tol, unit


def trust_region_factor(accepted: int, proposed: int) -> float:
    """1.5 above 75% acceptance, 0.5 below 25%, else 1."""
    if proposed == 0:
        return 1.0
    ratio = accepted / proposed
    if ratio > 0.75:
        return 1.5
    if ratio < 0.25:
        return 0.5
    return 1.0


def trust_region_update(eta: float, accepted: int, proposed: int) -> float:
    return eta * trust_region_factor(accepted, proposed)


def boundary_proposal(x, x_vic, eta_delta: float, eta_eps: float, rng: np.random.Generator | None = None,
                      noise=None) -> np.ndarray:
    """Orthogonal move on the sphere around ``x_vic``, then a step inwards."""
    diff = x - x_vic
    dist = float(np.linalg.norm(diff.ravel()))
    eta = rng.standard_normal(x.shape) if noise is None else np.array(noise, dtype=np.float64)
    eta *= eta_delta * dist / np.linalg.norm(eta.ravel())
    on_sphere = x_vic + dist * unit(diff + eta)
    inward = on_sphere + eta_eps * (x_vic - on_sphere)
    return np.clip(inward, 0.0, 1.0)


class BoundaryAttack(Attack):
    kind = AttackKind.BOUNDARY

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.eta_delta = float(self.p["eta_delta"])
        self.eta_eps = float(self.p["eta_eps"])
        self.proposed = 0
        self.accepted = 0

    @property
    def tol(self) -> float:
        return raw_tol(self.p["tol"], self.budget, self.dim)

    def phi(self, x) -> bool:
        return self.oracle.phi(self.oracle.ask(x))

    def run(self) -> None:
        start = random_adversarial_init(self.phi, self.rng, self.shape, self.p["init_draws"])
        x = self.locate_boundary(start)
        while True:
            x = self.iterate(x)

    def iterate(self, x):
        cand = self.take_step(x)
        self.proposed += 1
        if cand is not None and self.dist(cand) < self.dist(x):
            self.accepted += 1
            x = cand
        if self.proposed == self.p["window"]:
            # the inward step moves with the square of the factor, so the
            # inward/orthogonal ratio also tracks the acceptance rate
            factor = trust_region_factor(self.accepted, self.proposed)
            self.eta_delta *= factor
            self.eta_eps *= factor ** 2
            self.proposed = self.accepted = 0
        return x

    def dist(self, x) -> float:
        return float(np.linalg.norm((x - self.x_vic).ravel()))

    def take_step(self, x):
        cand = boundary_proposal(x, self.x_vic, self.eta_delta, self.eta_eps, self.rng)
        return cand if self.phi(cand) else None

    def locate_boundary(self, x_adv):
        return locate_boundary_vanilla(x_adv, self.x_vic, self.phi, self.tol)
