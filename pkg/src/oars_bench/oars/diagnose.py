"""Two-account test for the defense's action and store scope."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable

from ..core import OutcomeKind


class StoreDiagnosis(enum.Enum):
    BAN_PER_ACCOUNT = "ban / per-account"
    BAN_GLOBAL = "ban / global"
    REJECT_GLOBAL = "reject / global"
    REJECT_PER_ACCOUNT = "reject / per-account"
    NO_DEFENSE = "no defense detected"

    @property
    def bans(self) -> bool:
        return self in (StoreDiagnosis.BAN_PER_ACCOUNT, StoreDiagnosis.BAN_GLOBAL)


@dataclass(frozen=True)
class Diagnosis:
    kind: StoreDiagnosis
    queries_on_a: int
    extra_accounts: int = 1

    @property
    def total_queries(self) -> int:
        return self.queries_on_a + 1


def diagnose_store(query: Callable, x, limit: int = 200, account_a="diag-a", account_b="diag-b") -> Diagnosis:
    """Repeat ``x`` on account A until the defense acts (or ``limit``), then once on B.

    ``query(account, x)`` returns the endpoint's :class:`QueryOutcome`.
    The first action on A tells ban from reject; whether B is also actioned
    tells a global store from a per-account one.
    """
    if limit < 1:
        raise ValueError("limit must be positive")
    action = None
    used = 0
    while used < limit:
        used += 1
        out = query(account_a, x)
        if out.actioned:
            action = out.kind
            break
    on_b = query(account_b, x)
    if action is None:
        kind = StoreDiagnosis.NO_DEFENSE
    elif action is OutcomeKind.BANNED:
        kind = StoreDiagnosis.BAN_GLOBAL if on_b.actioned else StoreDiagnosis.BAN_PER_ACCOUNT
    else:
        kind = StoreDiagnosis.REJECT_GLOBAL if on_b.actioned else StoreDiagnosis.REJECT_PER_ACCOUNT
    return Diagnosis(kind, used)
