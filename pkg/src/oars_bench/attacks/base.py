"""Attack configuration, outcomes and the query oracle shared by all attacks."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..core import NormKind, OutcomeKind, PerturbationBudget, QueryOutcome, budget_distance
from ..defense.sdm import model_answer
from ..models import LossKind, MlpModel, loss_from_probs

DEFAULT_QUERY_BUDGET = 100_000


class AttackKind(enum.Enum):
    NES = "nes"
    SQUARE = "square"
    HSJA = "hsja"
    QEBA = "qeba"
    SURFREE = "surfree"
    BOUNDARY = "boundary"

    @property
    def label_mode(self) -> str:
        return "soft" if self in (AttackKind.NES, AttackKind.SQUARE) else "hard"

    @property
    def may_target(self) -> bool:
        return self in (AttackKind.NES, AttackKind.HSJA, AttackKind.QEBA)


# Per-attack constants. Score-based attacks use the LInf ball, decision-based
# attacks the normalized L2 ball; both with epsilon 0.05.
DEFAULT_PARAMS = {
    AttackKind.NES: {"n": 50, "sigma": 0.001, "step": 0.01},
    AttackKind.SQUARE: {"p_init": 0.1},
    AttackKind.HSJA: {"n0": 100, "n_max": 10_000, "gamma": 1.0, "tol": 1e-3, "max_halvings": 30,
                      "init_draws": 1000, "init_noise": 0.25},
    AttackKind.QEBA: {"n0": 100, "n_max": 10_000, "gamma": 1.0, "tol": 1e-3, "max_halvings": 30,
                      "init_draws": 1000, "init_noise": 0.25, "factor": 4},
    AttackKind.SURFREE: {"theta_max": 30.0, "angles": 8, "bisect": 10, "basis": 20, "tol": 1e-3, "init_draws": 1000},
    AttackKind.BOUNDARY: {"eta_delta": 0.01, "eta_eps": 0.01, "window": 10, "tol": 1e-3, "init_draws": 1000},
}


def default_budget(kind: AttackKind) -> PerturbationBudget:
    if kind.label_mode == "soft":
        return PerturbationBudget(NormKind.LINF, 0.05)
    return PerturbationBudget(NormKind.L2, 0.05, normalized=True)


@dataclass
class AttackConfig:
    kind: AttackKind
    targeted: bool = False
    target: int | None = None
    budget: PerturbationBudget | None = None
    query_budget: int = DEFAULT_QUERY_BUDGET
    params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        self.kind = AttackKind(self.kind)
        if self.budget is None:
            self.budget = default_budget(self.kind)
        if self.query_budget < 1:
            raise ValueError("query budget must be at least 1")
        if self.targeted and not self.kind.may_target:
            raise ValueError(f"{self.kind.value} is untargeted")
        if self.budget.epsilon <= 0:
            raise ValueError("epsilon must be positive for a runnable attack")
        unknown = set(self.params) - set(DEFAULT_PARAMS[self.kind])
        if unknown:
            raise ValueError(f"unknown {self.kind.value} parameters: {sorted(unknown)}")
        self.params = {**DEFAULT_PARAMS[self.kind], **self.params}

    def with_target(self, target: int | None) -> "AttackConfig":
        return AttackConfig(self.kind, self.targeted, target, self.budget, self.query_budget, dict(self.params), self.seed)


class Reason(enum.Enum):
    SUCCESS = "success"
    BUDGET_EXHAUSTED = "budget_exhausted"
    COLLISION = "collision"
    BANNED = "banned"


@dataclass
class AttackOutcome:
    success: bool
    x_adv: np.ndarray | None
    queries_used: int
    collisions_seen: int
    reason: Reason
    accounts_used: int = 1
    final_norm: float | None = None
    detail: str = ""
    adapted: dict = field(default_factory=dict)


class AttackStop(Exception):
    """Raised through the attack loop to end an episode."""

    reason: Reason


class Success(AttackStop):
    reason = Reason.SUCCESS

    def __init__(self, x):
        super().__init__("adversarial example found")
        self.x = x


class Collision(AttackStop):
    reason = Reason.COLLISION


class Banned(AttackStop):
    reason = Reason.BANNED


class BudgetExhausted(AttackStop):
    reason = Reason.BUDGET_EXHAUSTED


class ElementFailure(BudgetExhausted):
    """An adaptive element could not get a single query through."""


class InitFailure(BudgetExhausted):
    """No adversarial starting point was found."""


class Oracle:
    """Query endpoint as the attacker sees it.

    Counts every submitted query against ``query_budget`` and stops the
    episode (via :class:`Success`) as soon as an answered query is
    adversarial and inside the perturbation budget, after a non-counted
    check on the raw model. ``submit`` returns ``None`` for actioned
    queries; ``ask`` raises instead, which is how non-adaptive attacks
    experience a defense.
    """

    def __init__(self, model: MlpModel, x_vic, label: int, budget: PerturbationBudget, *,
                 sdm=None, label_mode: str = "soft", target: int | None = None,
                 query_budget: int = DEFAULT_QUERY_BUDGET, account=0,
                 blind: Callable | None = None):
        self.model = model
        self.x_vic = np.asarray(x_vic, dtype=np.float64)
        self.label = int(label)
        self.target = None if target is None else int(target)
        self.budget = budget
        self.sdm = sdm
        self.label_mode = label_mode
        self.query_budget = int(query_budget)
        self.account = account
        self.blind = blind
        self.rotate = False
        self._account_seq = 0
        self.queries = 0
        self.collisions = 0
        self.accounts_used = 1
        self.last_action: OutcomeKind | None = None

    @property
    def loss_kind(self) -> LossKind:
        return LossKind.UNTARGETED_MARGIN if self.target is None else LossKind.TARGETED_LOG_PROB

    def is_adversarial_label(self, label: int) -> bool:
        if self.target is not None:
            return label == self.target
        return label != self.label

    def _endpoint(self, x) -> QueryOutcome:
        if self.queries >= self.query_budget:
            raise BudgetExhausted(f"query budget of {self.query_budget} spent")
        self.queries += 1
        sent = self.blind(x) if self.blind is not None else x
        if self.sdm is None:
            return model_answer(self.model, sent, self.label_mode)
        return self.sdm.query(self.account, sent, self.model, self.label_mode)

    def new_account(self):
        self._account_seq += 1
        self.account = (self.account, self._account_seq) if not isinstance(self.account, tuple) else (self.account[0], self._account_seq)
        self.accounts_used += 1

    def raw(self, x) -> QueryOutcome:
        """One counted query on the current account, answer returned as is."""
        x = np.asarray(x, dtype=np.float64)
        out = self._endpoint(x)
        if out.actioned:
            self.collisions += 1
            self.last_action = out.kind
        elif self.is_adversarial_label(out.label) and self.distance(x) <= self.budget.epsilon + 1e-9:
            # reference check on the raw model; not a query
            if self.is_adversarial_label(int(self.model.hard_predict(x))):
                raise Success(x.copy())
        return out

    def submit(self, x) -> QueryOutcome | None:
        """Answer, or ``None`` if refused. With rotation on, a ban moves to a
        fresh account and the query is sent once more (and counted again)."""
        out = self.raw(x)
        if out.kind is OutcomeKind.BANNED and self.rotate:
            self.new_account()
            out = self.raw(x)
        return out if out.answered else None

    def ask(self, x) -> QueryOutcome:
        out = self.submit(x)
        if out is None:
            if self.last_action is OutcomeKind.BANNED:
                raise Banned("account banned")
            raise Collision("query rejected")
        return out

    # -- views on an answer --------------------------------------------------

    def objective(self, out: QueryOutcome) -> float:
        """Score to maximize: target log-probability, or the negated margin."""
        label = self.label if self.target is None else self.target
        value = loss_from_probs(out.probs, self.loss_kind, label)
        return value if self.target is not None else -value

    def phi(self, out: QueryOutcome) -> bool:
        return self.is_adversarial_label(out.label)

    def distance(self, x) -> float:
        return budget_distance(x, self.x_vic, self.budget)


class Attack:
    """Base class; subclasses implement ``run`` and loop until stopped.

    ``start`` is an optional clean sample of the target class that
    decision-based attacks may grow their initial point from.

    Element hooks (``estimate_gradient``, ``take_step``, ``locate_boundary``)
    are the seams where adaptive variants plug in.
    """

    kind: AttackKind

    def __init__(self, config: AttackConfig, oracle: Oracle, rng: np.random.Generator, start=None):
        self.config = config
        self.start = None if start is None else np.asarray(start, dtype=np.float64)
        self.oracle = oracle
        self.rng = rng
        self.p = config.params
        self.x_vic = oracle.x_vic
        self.budget = config.budget
        self.adapted: dict = {}

    @property
    def shape(self):
        return self.x_vic.shape

    @property
    def dim(self) -> int:
        return self.x_vic.size

    def run(self) -> None:
        raise NotImplementedError


def execute(attack: Attack) -> AttackOutcome:
    """Run an attack to termination and package the outcome."""
    oracle = attack.oracle
    x_adv = None
    detail = ""
    try:
        attack.run()
        reason = Reason.BUDGET_EXHAUSTED
        detail = "attack gave up"
    except Success as stop:
        reason = Reason.SUCCESS
        x_adv = stop.x
    except AttackStop as stop:
        reason = stop.reason
        detail = str(stop)
    return AttackOutcome(
        success=reason is Reason.SUCCESS,
        x_adv=x_adv,
        queries_used=oracle.queries,
        collisions_seen=oracle.collisions,
        reason=reason,
        accounts_used=oracle.accounts_used,
        final_norm=None if x_adv is None else oracle.distance(x_adv),
        detail=detail,
        adapted=dict(attack.adapted),
    )
