"""Non-adaptive attack episodes against a (possibly defended) model."""

from __future__ import annotations

import numpy as np

from ..core import rng_stream
from ..models import MlpModel
from .base import Attack, AttackConfig, AttackKind, AttackOutcome, Oracle, execute
from .boundary import BoundaryAttack
from .decision import HsjaAttack, QebaAttack
from .nes import NesAttack
from .square import SquareAttack
from .surfree import SurFreeAttack

ATTACKS: dict[AttackKind, type[Attack]] = {
    AttackKind.NES: NesAttack,
    AttackKind.SQUARE: SquareAttack,
    AttackKind.HSJA: HsjaAttack,
    AttackKind.QEBA: QebaAttack,
    AttackKind.SURFREE: SurFreeAttack,
    AttackKind.BOUNDARY: BoundaryAttack,
}


def victim_label(model: MlpModel, x_vic, label: int | None) -> int:
    predicted = int(model.hard_predict(x_vic))
    if label is None:
        return predicted
    if predicted != int(label):
        raise ValueError(f"victim is misclassified ({predicted} != {label}); pick a correctly classified sample")
    return int(label)


def make_oracle(config: AttackConfig, x_vic, label: int, sdm, model: MlpModel, account=0, blind=None) -> Oracle:
    if config.targeted:
        if config.target is None:
            raise ValueError("targeted attack needs a target label")
        if config.target == label:
            raise ValueError("target equals the victim's label")
    return Oracle(
        model, x_vic, label, config.budget,
        sdm=sdm, label_mode=config.kind.label_mode,
        target=config.target if config.targeted else None,
        query_budget=config.query_budget, account=account, blind=blind,
    )


def run_vanilla(config: AttackConfig, x_vic, sdm, model: MlpModel, label: int | None = None,
                account=0, start=None) -> AttackOutcome:
    """Run the plain attack; the first refused query ends it.

    ``start`` optionally seeds targeted decision-based attacks with a clean
    sample of the target class.
    """
    x_vic = np.asarray(x_vic, dtype=np.float64)
    label = victim_label(model, x_vic, label)
    oracle = make_oracle(config, x_vic, label, sdm, model, account)
    attack = ATTACKS[config.kind](config, oracle, rng_stream(config.seed), start=start)
    return execute(attack)
