"""Adaptive variants of the attacks: proposal adaptation, resampling, diagnostics."""

from .adapt import (AdaptConfig, CollisionProbe, Family, ProposalSpec, adapt_proposal, bracket_width,
                    resample_queries, with_recovery)
from .blind import Blinder, query_blind
from .config import (BOUNDARY, DEFAULT_SETTINGS, ELEMENT_TABLE, GRADIENT, STEP, ElementSettings,
                     OarsConfig)
from .diagnose import Diagnosis, StoreDiagnosis, diagnose_store
from .elements import (antithetic_sampler, oars_locate_boundary, oars_nes_gradient, oars_nes_step,
                       oars_sign_gradient, oars_square_step)
from .variants import (OARS_ATTACKS, OarsBoundary, OarsHsja, OarsNes, OarsQeba, OarsSquare, OarsSurFree,
                       run_oars)

__all__ = [
    "AdaptConfig", "CollisionProbe", "Family", "ProposalSpec", "adapt_proposal", "bracket_width",
    "resample_queries", "with_recovery", "Blinder", "query_blind", "BOUNDARY", "DEFAULT_SETTINGS",
    "ELEMENT_TABLE", "GRADIENT", "STEP", "ElementSettings", "OarsConfig", "Diagnosis", "StoreDiagnosis",
    "diagnose_store", "antithetic_sampler", "oars_locate_boundary", "oars_nes_gradient", "oars_nes_step",
    "oars_sign_gradient", "oars_square_step", "OARS_ATTACKS", "OarsBoundary", "OarsHsja", "OarsNes",
    "OarsQeba", "OarsSquare", "OarsSurFree", "run_oars",
]
