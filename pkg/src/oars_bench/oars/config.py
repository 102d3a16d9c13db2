"""Hyperparameters of the adaptive elements, per attack."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from ..attacks.base import AttackKind
from .adapt import AdaptConfig

GRADIENT, STEP, BOUNDARY = "gradient", "step", "boundary"

# Which elements each attack adapts.
ELEMENT_TABLE = {
    AttackKind.NES: frozenset({GRADIENT, STEP}),
    AttackKind.SQUARE: frozenset({STEP}),
    AttackKind.HSJA: frozenset({GRADIENT, STEP, BOUNDARY}),
    AttackKind.QEBA: frozenset({GRADIENT, STEP, BOUNDARY}),
    AttackKind.SURFREE: frozenset({STEP, BOUNDARY}),
    AttackKind.BOUNDARY: frozenset({STEP, BOUNDARY}),
}

# retry field name per element in configuration files
_RETRY_KEY = {GRADIENT: "ge_tries", STEP: "steps_tries", BOUNDARY: "tries"}


@dataclass(frozen=True)
class ElementSettings:
    """Search range plus bisection controls for one element.

    Ranges of L2 attacks are in normalized-L2 units; the boundary range is
    a fraction of the current distance to the clean sample.
    """

    lo: float
    hi: float
    adapt: AdaptConfig = AdaptConfig()

    def to_dict(self, element: str) -> dict:
        return {"lo": self.lo, "hi": self.hi, "stps": self.adapt.stps, "sam": self.adapt.sam,
                "cr": self.adapt.cr, _RETRY_KEY[element]: self.adapt.retries}

    @classmethod
    def from_dict(cls, element: str, doc: dict, base: "ElementSettings") -> "ElementSettings":
        allowed = {"lo", "hi", "stps", "sam", "cr", _RETRY_KEY[element]}
        unknown = set(doc) - allowed
        if unknown:
            raise ValueError(f"unknown {element} settings: {sorted(unknown)}")
        a = base.adapt
        adapt = AdaptConfig(int(doc.get("stps", a.stps)), int(doc.get("sam", a.sam)),
                            float(doc.get("cr", a.cr)), int(doc.get(_RETRY_KEY[element], a.retries)))
        return cls(float(doc.get("lo", base.lo)), float(doc.get("hi", base.hi)), adapt)


_L2_GRADIENT = ElementSettings(0.002, 0.2, AdaptConfig(10, 20, 0.05, 20))
_L2_STEP = ElementSettings(0.001, 0.1, AdaptConfig(10, 20, 0.05, 5))
_L2_BOUNDARY = ElementSettings(0.0, 1.0, AdaptConfig(10, 20, 0.3, 1))

DEFAULT_SETTINGS = {
    AttackKind.NES: {
        GRADIENT: ElementSettings(0.001, 0.2, AdaptConfig(10, 20, 0.0, 5)),
        STEP: ElementSettings(0.002, 0.05, AdaptConfig(10, 20, 0.005, 20)),
    },
    AttackKind.SQUARE: {
        STEP: ElementSettings(1, 32, AdaptConfig(10, 10, 0.0, 300)),
    },
    AttackKind.HSJA: {GRADIENT: _L2_GRADIENT, STEP: _L2_STEP, BOUNDARY: _L2_BOUNDARY},
    AttackKind.QEBA: {GRADIENT: _L2_GRADIENT, STEP: _L2_STEP, BOUNDARY: _L2_BOUNDARY},
    AttackKind.SURFREE: {
        STEP: ElementSettings(0.001, 0.1, AdaptConfig(5, 20, 0.05, 100)),
        BOUNDARY: _L2_BOUNDARY,
    },
    AttackKind.BOUNDARY: {
        STEP: ElementSettings(0.001, 0.1, AdaptConfig(5, 20, 0.05, 100)),
        BOUNDARY: _L2_BOUNDARY,
    },
}

ACCOUNT_STRATEGIES = ("auto", "single", "rotate")


@dataclass(frozen=True)
class OarsConfig:
    """What to adapt and how.

    ``elements=None`` enables the attack's row of :data:`ELEMENT_TABLE`.
    ``account_strategy``: ``auto`` runs the store diagnostic first and
    rotates accounts only against banning defenses; ``rotate`` always
    rotates on a ban; ``single`` never does.
    """

    elements: frozenset | None = None
    settings: dict = field(default_factory=dict)
    account_strategy: str = "auto"
    diagnose_limit: int = 200
    blind: float = 0.0

    def __post_init__(self):
        if self.account_strategy not in ACCOUNT_STRATEGIES:
            raise ValueError(f"account strategy must be one of {ACCOUNT_STRATEGIES}")
        if self.elements is not None:
            object.__setattr__(self, "elements", frozenset(self.elements))
            bad = self.elements - {GRADIENT, STEP, BOUNDARY}
            if bad:
                raise ValueError(f"unknown elements: {sorted(bad)}")

    def enabled(self, kind: AttackKind) -> frozenset:
        table = ELEMENT_TABLE[kind]
        return table if self.elements is None else self.elements & table

    def element(self, kind: AttackKind, name: str) -> ElementSettings:
        base = DEFAULT_SETTINGS[kind][name]
        override = self.settings.get(name)
        if override is None:
            return base
        if isinstance(override, ElementSettings):
            return override
        return ElementSettings.from_dict(name, override, base)

    def with_settings(self, name: str, value) -> "OarsConfig":
        return replace(self, settings={**self.settings, name: value})

    def to_dict(self) -> dict:
        settings = {}
        for name, value in self.settings.items():
            settings[name] = value.to_dict(name) if isinstance(value, ElementSettings) else dict(value)
        return {
            "elements": None if self.elements is None else sorted(self.elements),
            "settings": settings,
            "account_strategy": self.account_strategy,
            "diagnose_limit": self.diagnose_limit,
            "blind": self.blind,
        }

    @classmethod
    def from_dict(cls, doc: dict | None) -> "OarsConfig":
        doc = dict(doc or {})
        allowed = {"elements", "settings", "account_strategy", "diagnose_limit", "blind", GRADIENT, STEP, BOUNDARY}
        unknown = set(doc) - allowed
        if unknown:
            raise ValueError(f"unknown oars fields: {sorted(unknown)}")
        settings = dict(doc.get("settings") or {})
        for name in (GRADIENT, STEP, BOUNDARY):
            if name in doc:
                settings[name] = doc[name]
        bad = set(settings) - {GRADIENT, STEP, BOUNDARY}
        if bad:
            raise ValueError(f"unknown elements in settings: {sorted(bad)}")
        for name, value in settings.items():
            if isinstance(value, dict):
                # field names are checked here; values against each attack's defaults later
                ElementSettings.from_dict(name, value, ElementSettings(0.0, 1.0))
        elements = doc.get("elements")
        return cls(
            elements=None if elements is None else frozenset(elements),
            settings=settings,
            account_strategy=doc.get("account_strategy", "auto"),
            diagnose_limit=int(doc.get("diagnose_limit", 200)),
            blind=float(doc.get("blind", 0.0)),
        )
