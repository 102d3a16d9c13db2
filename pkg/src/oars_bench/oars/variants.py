"""Adaptive subclasses of the six attacks, and the episode runner.

Each subclass overrides only the element hooks switched on in its
:class:`OarsConfig`; a disabled element falls through to the parent, so
with nothing enabled the attack is the vanilla one query for query.
"""

from __future__ import annotations

import numpy as np

from ..attacks.base import Attack, AttackConfig, AttackKind, AttackOutcome, ElementFailure, execute
from ..attacks.boundary import BoundaryAttack, boundary_proposal
from ..attacks.decision import HsjaAttack, QebaAttack, hsja_initial_step, unit
from ..attacks.nes import NesAttack
from ..attacks.runner import make_oracle, run_vanilla, victim_label
from ..attacks.square import SquareAttack, paint_squares, stripes_init
from ..attacks.surfree import SurFreeAttack
from ..core import derive_seed, rng_stream
from ..models import MlpModel
from .adapt import CollisionProbe, Family, ProposalSpec, adapt_proposal, with_recovery
from .blind import Blinder
from .config import BOUNDARY, GRADIENT, STEP, OarsConfig
from .diagnose import diagnose_store
from .elements import oars_locate_boundary, oars_nes_gradient, oars_nes_step, oars_sign_gradient, oars_square_step


class OarsMixin:
    """Shared plumbing: settings lookup, probing, and adaptation history."""

    oars: OarsConfig

    def __init__(self, config, oracle, rng, start=None, oars: OarsConfig | None = None):
        super().__init__(config, oracle, rng, start=start)
        self.setup_oars(oars)

    def setup_oars(self, oars: OarsConfig | None):
        self.oars = oars if oars is not None else OarsConfig(elements=frozenset())
        self.enabled = self.oars.enabled(self.kind)
        self.probe = CollisionProbe(self.oracle.submit)
        self.params: dict = {}

    def on(self, element: str) -> bool:
        return element in self.enabled

    def settings(self, element: str):
        return self.oars.element(self.kind, element)

    def scale(self) -> float:
        """Multiplier from configured units to raw units (normalized L2)."""
        return float(np.sqrt(self.dim)) if self.budget.normalized else 1.0

    def adapt(self, key: str, element: str, family: Family, anchor, sampler=None, scale: float = 1.0):
        """Run the bisection for one parameter and record the result."""
        s = self.settings(element)
        spec = ProposalSpec(family, s.lo * scale, s.hi * scale)
        value = adapt_proposal(spec, s.adapt, anchor, self.probe, self.rng, sampler)
        self.params[key] = value
        self.adapted.setdefault(key, []).append(float(value))
        return value

    def soft_phi(self, x):
        """Adversarial verdict, or None if the query was refused."""
        out = self.oracle.submit(x)
        return None if out is None else self.oracle.phi(out)


class OarsNes(OarsMixin, NesAttack):
    def first_query(self, x) -> None:
        if self.enabled:
            # the clean sample may already sit in the store
            self.oracle.submit(x)
        else:
            super().first_query(x)

    def estimate_gradient(self, x):
        if not self.on(GRADIENT):
            return super().estimate_gradient(x)
        s = self.settings(GRADIENT)
        if "sigma" not in self.params:
            self.adapt("sigma", GRADIENT, Family.GAUSSIAN_SIGMA, x)

        def sample():
            return oars_nes_gradient(x, self.oracle.objective, self.params["sigma"], self.p["n"],
                                     s.adapt.retries, self.probe, self.rng)

        return with_recovery(sample, lambda: self.adapt("sigma", GRADIENT, Family.GAUSSIAN_SIGMA, x), GRADIENT)

    def take_step(self, x, grad):
        if not self.on(STEP):
            return super().take_step(x, grad)
        s = self.settings(STEP)

        def sampler(rng, anchor, theta):
            return np.clip(anchor + theta * rng.choice([-1.0, 1.0], size=anchor.shape), 0.0, 1.0)

        def readapt():
            self.adapt("step", STEP, Family.RADEMACHER_SCALE, x, sampler)

        if "step" not in self.params:
            readapt()

        def sample():
            got = oars_nes_step(x, grad, self.params["step"], self.x_vic, self.budget, self.probe,
                                self.rng, s.adapt.retries)
            return None if got is None else got[0]

        return with_recovery(sample, readapt, STEP)


class OarsSquare(OarsMixin, SquareAttack):
    def initial_point(self):
        if not self.on(STEP):
            return super().initial_point()
        tries = self.settings(STEP).adapt.retries
        for _ in range(1 + tries):
            x = stripes_init(self.x_vic, self.budget.epsilon, self.rng)
            out = self.oracle.submit(x)
            if out is not None:
                return x, self.oracle.objective(out)
        raise ElementFailure(f"{STEP}: no initial point accepted")

    def take_step(self, x, best):
        if not self.on(STEP):
            return super().take_step(x, best)
        s = self.settings(STEP)
        side = self.side
        eps = self.budget.epsilon

        def readapt():
            def sampler(rng, anchor, m):
                return paint_squares(anchor, self.x_vic, eps, side, int(m), rng)
            self.adapt("squares", STEP, Family.SQUARE_COUNT, x, sampler)
            self.params["side"] = side

        if self.params.get("side") != side:
            readapt()

        def sample():
            return oars_square_step(x, best, self.x_vic, eps, side, int(self.params["squares"]),
                                    self.oracle.objective, self.probe, self.rng, s.adapt.retries)

        return with_recovery(sample, readapt, STEP)


class BoundaryElement(OarsMixin):
    """Boundary search with an adapted random termination distance."""

    def locate_boundary(self, x_adv):
        if not self.on(BOUNDARY):
            return super().locate_boundary(x_adv)
        if "termination" not in self.params:
            # the range is a fraction of the distance at the first search
            d = float(np.linalg.norm((x_adv - self.x_vic).ravel()))
            self.adapt("termination", BOUNDARY, Family.UNIFORM_TERMINATION, x_adv, scale=d)
        a = self.params["termination"]
        r = max(float(self.rng.uniform(0.0, a)), self.tol)
        return oars_locate_boundary(x_adv, self.x_vic, self.soft_phi, r)


class OarsHsja(BoundaryElement, HsjaAttack):
    def estimate_gradient(self, x, zeta: float, n: int):
        if not self.on(GRADIENT):
            return super().estimate_gradient(x, zeta, n)
        s = self.settings(GRADIENT)

        def readapt():
            self.adapt("zeta", GRADIENT, Family.SPHERE_RADIUS, x, scale=self.scale())

        if "zeta" not in self.params or self.params.pop("stale_zeta", False):
            readapt()

        def sample():
            z = max(zeta, self.params["zeta"])
            asked, refused = self.probe.queries, self.probe.refused
            grad = oars_sign_gradient(x, self.oracle.phi, z, n, s.adapt.retries, self.probe, self.directions)
            # mostly refused: the neighbourhood got crowded, adapt again next time
            if self.probe.refused - refused > 0.5 * (self.probe.queries - asked):
                self.params["stale_zeta"] = True
            return grad

        return with_recovery(sample, readapt, GRADIENT)

    def take_step(self, x, grad, t: int):
        if not self.on(STEP):
            return super().take_step(x, grad, t)
        s = self.settings(STEP)

        def readapt():
            self.adapt("step_floor", STEP, Family.SPHERE_RADIUS, x, scale=self.scale())

        if "step_floor" not in self.params:
            readapt()

        def sample():
            return self.geometric_search(x, unit(grad), t, s.adapt.retries)

        return with_recovery(sample, readapt, STEP)

    def geometric_search(self, x, direction, t: int, tries: int):
        """Halving search along ``direction`` that never goes below the floor.

        A refusal abandons the direction for a perturbed one. Returns the
        adversarial candidate, ``x`` when the floor was reached without one,
        or None when every direction was refused.
        """
        floor = self.params["step_floor"]
        start = max(hsja_initial_step(x, self.x_vic, t), floor)
        for k in range(1 + tries):
            d = direction if k == 0 else unit(direction + (k / max(tries, 1)) * unit(self.rng.standard_normal(self.shape)))
            lam = start
            for _ in range(self.p["max_halvings"]):
                verdict = self.soft_phi(np.clip(x + lam * d, 0.0, 1.0))
                if verdict is None:
                    break
                if verdict:
                    return np.clip(x + lam * d, 0.0, 1.0)
                if lam / 2.0 < floor:
                    return x
                lam /= 2.0
            else:
                return x
        return None


class OarsQeba(OarsHsja, QebaAttack):
    pass


class OarsSurFree(BoundaryElement, SurFreeAttack):
    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.refused_rounds = 0

    def angles(self, radius: float):
        schedule = super().angles(radius)
        if not self.on(STEP):
            return schedule
        # smallest angle whose move along the circle clears the floor
        floor = np.arcsin(min(1.0, self.params["step_floor"] / radius))
        kept = [a for a in schedule if abs(a) >= floor]
        return kept or [np.sign(schedule[0]) * floor]

    def iterate(self, x):
        if not self.on(STEP):
            return super().iterate(x)
        if "step_floor" not in self.params:
            self.adapt("step_floor", STEP, Family.SPHERE_RADIUS, x, scale=self.scale())
        before = self.probe.refused
        asked = self.oracle.queries
        x_new = super().iterate(x)
        if self.oracle.queries > asked and self.probe.refused - before == self.oracle.queries - asked:
            self.refused_rounds += 1
        else:
            self.refused_rounds = 0
        tries = self.settings(STEP).adapt.retries
        if self.refused_rounds > tries:
            if self.params.get("readapted"):
                raise ElementFailure(f"{STEP}: every query refused for {tries + 1} directions")
            self.params["readapted"] = True
            self.adapt("step_floor", STEP, Family.SPHERE_RADIUS, x, scale=self.scale())
            self.refused_rounds = 0
        return x_new

    def take_step(self, u, v, radius: float):
        if not self.on(STEP):
            return super().take_step(u, v, radius)
        for theta in self.angles(radius):
            if self.soft_phi(self.point(u, v, radius, theta)):
                return self.refine(u, v, radius, theta)
        return None

    def refine(self, u, v, radius, theta):
        if not self.on(STEP):
            return super().refine(u, v, radius, theta)
        lo, hi = abs(theta), min(2 * abs(theta), np.pi / 2)
        sign = np.sign(theta)
        for _ in range(self.p["bisect"]):
            mid = 0.5 * (lo + hi)
            # a refused probe counts as not adversarial
            if self.soft_phi(self.point(u, v, radius, sign * mid)):
                lo = mid
            else:
                hi = mid
        return self.point(u, v, radius, sign * lo)


class OarsBoundary(BoundaryElement, BoundaryAttack):
    def take_step(self, x):
        if not self.on(STEP):
            return super().take_step(x)
        s = self.settings(STEP)

        def readapt():
            self.adapt("step_floor", STEP, Family.SPHERE_RADIUS, x, scale=self.scale())

        if "step_floor" not in self.params:
            readapt()

        def sample():
            for _ in range(1 + s.adapt.retries):
                noise = self.rng.standard_normal(self.shape)
                cand = boundary_proposal(x, self.x_vic, self.eta_delta, self.eta_eps, noise=noise)
                moved = float(np.linalg.norm((cand - x).ravel()))
                floor = self.params["step_floor"]
                if 0.0 < moved < floor:
                    f = floor / moved
                    cand = boundary_proposal(x, self.x_vic, self.eta_delta * f, self.eta_eps * f, noise=noise)
                verdict = self.soft_phi(cand)
                if verdict is not None:
                    return (cand if verdict else None,)
            return None

        return with_recovery(sample, readapt, STEP)[0]


OARS_ATTACKS: dict[AttackKind, type[Attack]] = {
    AttackKind.NES: OarsNes,
    AttackKind.SQUARE: OarsSquare,
    AttackKind.HSJA: OarsHsja,
    AttackKind.QEBA: OarsQeba,
    AttackKind.SURFREE: OarsSurFree,
    AttackKind.BOUNDARY: OarsBoundary,
}


def run_oars(config: AttackConfig, oars: OarsConfig, x_vic, sdm, model: MlpModel, label: int | None = None,
             account=0, start=None) -> AttackOutcome:
    """One adaptive episode.

    With no element enabled this is exactly :func:`run_vanilla`. With the
    ``auto`` account strategy the store diagnostic runs first (its queries
    count against the budget). Against a banning defense the attack goes
    on from the second account and rotates on every ban; otherwise it
    returns to the first.
    """
    if not oars.enabled(config.kind):
        return run_vanilla(config, x_vic, sdm, model, label=label, account=account, start=start)
    x_vic = np.asarray(x_vic, dtype=np.float64)
    label = victim_label(model, x_vic, label)
    blind = None
    if oars.blind > 0:
        blind = Blinder(oars.blind, rng_stream(derive_seed(config.seed, "blind")))
    oracle = make_oracle(config, x_vic, label, sdm, model, account, blind=blind)
    attack = OARS_ATTACKS[config.kind](config, oracle, rng_stream(config.seed), start=start, oars=oars)
    if oars.account_strategy == "rotate":
        oracle.rotate = True
    elif oars.account_strategy == "auto":
        run = attack.run

        def diagnosed_run():
            first = oracle.account

            def query(who, x):
                if who == "b" and oracle.account == first:
                    oracle.new_account()
                return oracle.raw(x)

            found = diagnose_store(query, x_vic, oars.diagnose_limit, "a", "b")
            attack.adapted["diagnosis"] = found.kind.value
            attack.adapted["diagnosis_queries"] = found.total_queries
            oracle.rotate = found.kind.bans
            if not found.kind.bans:
                # reject-only defenses cost no further accounts
                oracle.account = first
            run()

        attack.run = diagnosed_run
    return execute(attack)
