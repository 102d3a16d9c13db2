"""Query-based black-box attacks in their standard, non-adaptive form."""

from .base import (
    DEFAULT_PARAMS,
    DEFAULT_QUERY_BUDGET,
    Attack,
    AttackConfig,
    AttackKind,
    AttackOutcome,
    AttackStop,
    Banned,
    BudgetExhausted,
    Collision,
    ElementFailure,
    InitFailure,
    Oracle,
    Reason,
    Success,
    default_budget,
    execute,
)
from .boundary import BoundaryAttack, boundary_proposal, trust_region_factor, trust_region_update
from .decision import (
    HsjaAttack,
    QebaAttack,
    bisect_boundary,
    hsja_gradient,
    hsja_initial_step,
    locate_boundary_vanilla,
    qeba_gradient,
    random_adversarial_init,
    subspace_directions,
)
from .nes import NesAttack, antithetic_directions, nes_gradient, nes_step
from .runner import ATTACKS, make_oracle, run_vanilla, victim_label
from .square import SquareAttack, paint_squares, square_fraction, square_side, stripes_init
from .surfree import SurFreeAttack, angle_schedule, circle_point, orthogonal_direction
