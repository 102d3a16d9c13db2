"""Experiment orchestration: victims, attack runs, metrics, FPR and persistence."""

from __future__ import annotations

import copy
import hashlib
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .attacks import AttackConfig, AttackKind, run_vanilla
from .core import NormKind, PerturbationBudget, derive_seed, rng_stream
from .defense import build_sdm, sdm_query
from .models import SyntheticTask, generate_task, load_weights
from .oars import OarsConfig, run_oars

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
OUT_DIR_ENV = "OARS_BENCH_OUT_DIR"


class ConfigError(ValueError):
    """Invalid or unreadable experiment configuration."""


# -- configuration -----------------------------------------------------------

@dataclass
class AttackSpec:
    """One attack column of an experiment. ``oars=None`` runs the plain attack;
    ``targeted=None`` targets whenever the attack supports it."""

    kind: AttackKind
    targeted: bool | None = None
    query_budget: int = 100_000
    params: dict = field(default_factory=dict)
    norm: str | None = None
    epsilon: float | None = None
    normalized: bool | None = None
    oars: dict | None = None
    label: str | None = None

    def __post_init__(self):
        self.kind = AttackKind(self.kind)
        if self.targeted is None:
            self.targeted = self.kind.may_target

    @property
    def name(self) -> str:
        if self.label:
            return self.label
        return ("oars-" if self.oars is not None else "") + self.kind.value

    def budget(self) -> PerturbationBudget | None:
        if self.epsilon is None:
            return None
        norm = NormKind.parse(self.norm or ("linf" if self.kind.label_mode == "soft" else "l2"))
        normalized = norm is NormKind.L2 if self.normalized is None else bool(self.normalized)
        return PerturbationBudget(norm, float(self.epsilon), normalized)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kind"] = self.kind.value
        return d

    @classmethod
    def from_dict(cls, doc) -> "AttackSpec":
        if isinstance(doc, str):
            doc = {"kind": doc}
        doc = dict(doc)
        allowed = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - allowed
        if unknown:
            raise ConfigError(f"unknown attack fields: {sorted(unknown)}")
        try:
            return cls(**doc)
        except (TypeError, ValueError) as err:
            raise ConfigError(f"bad attack entry {doc}: {err}") from err


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    seed: int = 0
    task: dict = field(default_factory=lambda: {"seed": 7})
    sdm: dict | None = None
    attacks: list = field(default_factory=list)
    victims: int = 20
    output: str | None = None
    fpr_samples: int = 0

    def __post_init__(self):
        if self.victims < 1:
            raise ConfigError("victim count must be at least 1")
        if not self.attacks:
            raise ConfigError("no attacks configured")
        self.attacks = [a if isinstance(a, AttackSpec) else AttackSpec.from_dict(a) for a in self.attacks]
        if self.sdm == "none":
            self.sdm = None
        if "weights" in self.task and not Path(self.task["weights"]).exists():
            raise ConfigError(f"weights file not found: {self.task['weights']}")
        self.validate()

    def validate(self) -> None:
        """Build every component once so bad fields fail at load time."""
        try:
            build_sdm(self.sdm, tuple(self.task.get("shape", (16, 16, 1))))
            for a in self.attacks:
                AttackConfig(a.kind, targeted=a.targeted, budget=a.budget(), query_budget=a.query_budget,
                             params=dict(a.params))
                if a.oars is not None:
                    OarsConfig.from_dict(a.oars)
        except (TypeError, ValueError) as err:
            raise ConfigError(str(err)) from err

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "name": self.name,
            "seed": self.seed,
            "task": dict(self.task),
            "sdm": copy.deepcopy(self.sdm),
            "attacks": [a.to_dict() for a in self.attacks],
            "victims": self.victims,
            "output": self.output,
            "fpr_samples": self.fpr_samples,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        doc = dict(doc)
        version = doc.pop("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigError(f"config schema version {version} is not {SCHEMA_VERSION}")
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown experiment fields: {sorted(unknown)}")
        return cls(**doc)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as err:
            raise ConfigError(f"{path}: not valid JSON ({err})") from err
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: top level must be an object")
        # relative weight paths are resolved against the config file
        task = doc.get("task") or {}
        if "weights" in task and not os.path.isabs(task["weights"]):
            task = {**task, "weights": str(path.parent / task["weights"])}
            doc["task"] = task
        return cls.from_dict(doc)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def build_task(spec: dict) -> SyntheticTask:
    """Procedural task from ``{"seed", "classes", "shape"}``, or a weights file
    plus the task seed that generates its samples."""
    spec = dict(spec)
    unknown = set(spec) - {"seed", "classes", "shape", "weights"}
    if unknown:
        raise ConfigError(f"unknown task fields: {sorted(unknown)}")
    task = generate_task(int(spec.get("seed", 7)), int(spec.get("classes", 10)), tuple(spec.get("shape", (16, 16, 1))))
    if "weights" in spec:
        model = load_weights(spec["weights"])
        if model.input_shape is not None and tuple(model.input_shape) != tuple(task.shape):
            raise ConfigError(f"model input shape {model.input_shape} does not match task {task.shape}")
        task.model = model
    return task


# -- records and metrics -------------------------------------------------------

@dataclass
class RunRecord:
    victim: int
    seed: int
    label: int
    target: int | None
    success: bool
    queries: int
    collisions: int
    accounts: int
    final_norm: float | None
    reason: str
    detail: str = ""
    adapted: dict = field(default_factory=dict)


@dataclass
class Metrics:
    attack: str
    victims: int
    successes: int
    records: list
    fpr: float | None = None

    @property
    def asr(self) -> float:
        return self.successes / self.victims

    @property
    def mean_queries_success(self) -> float | None:
        q = [r.queries for r in self.records if r.success]
        return None if not q else sum(q) / len(q)

    @property
    def accounts_used(self) -> float:
        return sum(r.accounts for r in self.records) / len(self.records)

    def summary(self) -> dict:
        return {
            "attack": self.attack,
            "victims": self.victims,
            "successes": self.successes,
            "asr": self.asr,
            "mean_queries_success": self.mean_queries_success,
            "mean_accounts": self.accounts_used,
            "fpr": self.fpr,
        }

    def to_dict(self) -> dict:
        return {**self.summary(), "records": [asdict(r) for r in self.records]}

    @classmethod
    def from_dict(cls, doc: dict) -> "Metrics":
        return cls(doc["attack"], doc["victims"], doc["successes"],
                   [RunRecord(**r) for r in doc["records"]], doc.get("fpr"))

    @classmethod
    def from_records(cls, attack: str, records: list, fpr: float | None = None) -> "Metrics":
        return cls(attack, len(records), sum(1 for r in records if r.success), list(records), fpr)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    metrics: list
    runtime_s: float = 0.0
    timestamp: str = ""

    def by_attack(self, name: str) -> Metrics:
        for m in self.metrics:
            if m.attack == name:
                return m
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "config_hash": self.config.digest(),
            "config": self.config.to_dict(),
            "summary": [m.summary() for m in self.metrics],
            "results": [m.to_dict() for m in self.metrics],
            # the only block that may differ between identical reruns
            "timing": {"timestamp": self.timestamp, "runtime_s": self.runtime_s},
        }


# -- victims and runs ------------------------------------------------------------

@dataclass
class Victim:
    index: int
    x: np.ndarray
    label: int
    target: int
    start: np.ndarray


def select_victims(task: SyntheticTask, n: int, seed: int, max_draws: int = 100_000) -> list:
    """Correctly classified draws, each with a uniform target != label and a
    clean sample of the target class (used to seed targeted decision attacks)."""
    rng = rng_stream(derive_seed(seed, 0))
    out = []
    for _ in range(max_draws):
        if len(out) == n:
            break
        x, y = task.sample(rng)
        if int(task.model.hard_predict(x)) != y:
            continue
        target = int(rng.choice([c for c in range(task.classes) if c != y]))
        start, _ = task.sample(rng, label=target)
        out.append(Victim(len(out), x, y, target, start))
    if len(out) < n:
        raise RuntimeError(f"only {len(out)} correctly classified victims in {max_draws} draws")
    return out


def run_seed(seed: int, attack_index: int, victim_index: int) -> int:
    return int(derive_seed(seed, 1, attack_index, victim_index).generate_state(1, np.uint64)[0])


def run_one(task: SyntheticTask, sdm_cfg, spec: AttackSpec, victim: Victim, seed: int) -> RunRecord:
    """One attack episode against a fresh defense instance."""
    sdm = build_sdm(sdm_cfg, task.shape)
    targeted = spec.targeted
    config = AttackConfig(spec.kind, targeted=targeted, target=victim.target if targeted else None,
                          budget=spec.budget(), query_budget=spec.query_budget, params=dict(spec.params), seed=seed)
    start = victim.start if targeted else None
    if spec.oars is None:
        out = run_vanilla(config, victim.x, sdm, task.model, victim.label, start=start)
    else:
        out = run_oars(config, OarsConfig.from_dict(spec.oars), victim.x, sdm, task.model, victim.label, start=start)
    return RunRecord(
        victim=victim.index, seed=seed, label=victim.label, target=config.target,
        success=out.success, queries=out.queries_used, collisions=out.collisions_seen,
        accounts=out.accounts_used, final_norm=out.final_norm, reason=out.reason.value,
        detail=out.detail, adapted=_plain(out.adapted),
    )


def _plain(value):
    """JSON-friendly copy (numpy scalars to Python numbers)."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    return value


def _job(args):
    task_spec, sdm_cfg, spec, victim, seed = args
    return run_one(build_task(task_spec), sdm_cfg, spec, victim, seed)


def run_experiment(cfg: ExperimentConfig, jobs: int = 1, progress=None) -> ExperimentResult:
    """Every configured attack against every victim, one fresh defense per run.

    Per-run seeds depend only on (experiment seed, attack index, victim
    index), so results do not depend on ordering or on ``jobs``.
    """
    t0 = time.perf_counter()
    task = build_task(cfg.task)
    victims = select_victims(task, cfg.victims, cfg.seed)
    work = [(a, v) for a in range(len(cfg.attacks)) for v in victims]
    args = [(cfg.task, cfg.sdm, cfg.attacks[a], v, run_seed(cfg.seed, a, v.index)) for a, v in work]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_job, args))
    else:
        records = []
        for item in args:
            _, sdm_cfg, spec, victim, seed = item
            records.append(run_one(task, sdm_cfg, spec, victim, seed))
            if progress:
                progress(spec.name, records[-1])
    fpr = None
    if cfg.fpr_samples and cfg.sdm is not None:
        fpr = measure_fpr(build_sdm(cfg.sdm, task.shape), benign_stream(task, cfg.fpr_samples, cfg.seed), task.model)
    metrics = []
    for a, spec in enumerate(cfg.attacks):
        rows = [r for (i, _), r in zip(work, records) if i == a]
        metrics.append(Metrics.from_records(spec.name, rows, fpr))
    return ExperimentResult(cfg, metrics, time.perf_counter() - t0, time.strftime("%Y-%m-%dT%H:%M:%S"))


# -- false positives ---------------------------------------------------------------

def benign_stream(task: SyntheticTask, n: int, seed: int) -> np.ndarray:
    """``n`` fresh i.i.d. task samples."""
    x, _ = task.sample(rng_stream(derive_seed(seed, 2)), n)
    return x


def measure_fpr(sdm, samples, model, account_policy: str = "single") -> float:
    """Fraction of benign queries the defense actions.

    ``single``: one account sends the whole stream. ``per_query``: every
    query comes from a fresh account.
    """
    if account_policy not in ("single", "per_query"):
        raise ValueError("account policy is 'single' or 'per_query'")
    samples = list(samples)
    if sdm is None or not samples:
        return 0.0
    hits = 0
    for i, x in enumerate(samples):
        account = 0 if account_policy == "single" else i
        if sdm_query(sdm, account, x, model, "hard").actioned:
            hits += 1
    return hits / len(samples)


@dataclass(frozen=True)
class Calibration:
    threshold: float
    fpr: float
    attained: bool


def stream_scores(sdm, samples, account_policy: str = "single") -> np.ndarray:
    """Similarity score of each stream element against everything before it.

    Stores keep every query, so these do not depend on the threshold.
    """
    scores = []
    for i, x in enumerate(samples):
        s = sdm.observe(0 if account_policy == "single" else i, x)
        scores.append(np.inf if s is None else s)
    return np.array(scores)


def calibrate_threshold(sdm_cfg: dict, target_fpr: float, samples, input_shape, steps: int = 60,
                        account_policy: str = "single") -> Calibration:
    """Largest threshold whose FPR on ``samples`` stays at or below the target.

    FPR grows with the threshold, so bisection over ``[0, hi]`` finds it.
    If even a zero threshold exceeds the target, that most permissive
    value comes back with ``attained=False``.
    """
    samples = list(samples)
    if not 0.0 <= target_fpr <= 1.0:
        raise ValueError("target FPR must lie in [0, 1]")
    if target_fpr > 0 and len(samples) < 100 / target_fpr:
        raise ValueError(f"need at least {int(np.ceil(100 / target_fpr))} samples for target {target_fpr}")
    sdm = build_sdm(sdm_cfg, input_shape)
    if sdm is None or not hasattr(sdm, "observe"):
        raise ValueError("calibration needs a single (non-ensemble) defense")
    scores = stream_scores(sdm, samples, account_policy)
    finite = scores[np.isfinite(scores)]
    hi = max(1.0, float(finite.max()) if finite.size else 1.0)

    def rate(t):
        return float(np.mean(scores <= t))

    if rate(hi) <= target_fpr:
        return Calibration(hi, rate(hi), True)
    if rate(0.0) > target_fpr:
        log.warning("target FPR %.4g is unattainable; returning threshold 0", target_fpr)
        return Calibration(0.0, rate(0.0), False)
    lo = 0.0
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        if rate(mid) <= target_fpr:
            lo = mid
        else:
            hi = mid
    return Calibration(lo, rate(lo), True)


# -- sweeps ------------------------------------------------------------------------

WQ_GRID = ((50, 20), (20, 20), (100, 20), (50, 10), (50, 50))


def reconfiguration_sweep(cfg: ExperimentConfig, cells: list, jobs: int = 1, progress=None,
                          calibrate_fpr: float | None = None) -> list:
    """Rerun ``cfg`` with each cell's overrides merged into the defense config.

    ``cells`` holds dicts such as ``{"quantization": 20, "window": 50}`` or
    ``{"threshold": 0.7}``. With ``calibrate_fpr`` set, each cell's threshold
    is first calibrated to that benign false positive rate (on
    ``ceil(100 / rate)`` fresh samples), so cells are compared at equal FPR.
    Returns ``(cell, ExperimentResult)`` pairs; calibrated cells carry the
    threshold they ran with.
    """
    if not cells:
        raise ValueError("sweep grid is empty")
    if cfg.sdm is None:
        raise ValueError("a sweep needs a defense to reconfigure")
    stream = task = None
    if calibrate_fpr is not None:
        if not 0.0 < calibrate_fpr < 1.0:
            raise ValueError("calibration target must lie in (0, 1)")
        if any("threshold" in cell for cell in cells):
            raise ValueError("a threshold sweep cannot also calibrate the threshold")
        task = build_task(cfg.task)
        stream = benign_stream(task, int(np.ceil(100 / calibrate_fpr)), cfg.seed)
    out = []
    for cell in cells:
        cell = dict(cell)
        sub = copy.deepcopy(cfg)
        sub.sdm = {**cfg.sdm, **cell}
        if stream is not None:
            cal = calibrate_threshold(sub.sdm, calibrate_fpr, stream, task.shape)
            cell["threshold"] = sub.sdm["threshold"] = cal.threshold
        out.append((cell, run_experiment(sub, jobs=jobs, progress=progress)))
    return out


def grid_cells(pairs=WQ_GRID) -> list:
    """(quantization, window) pairs as defense overrides."""
    return [{"quantization": q, "window": w} for q, w in pairs]


def threshold_cells(values) -> list:
    return [{"threshold": float(t)} for t in values]


# -- persistence ---------------------------------------------------------------------

def default_out_dir() -> Path:
    return Path(os.environ.get(OUT_DIR_ENV, "results"))


def result_path(result: ExperimentResult, out=None) -> Path:
    """``out`` may name a file (``*.json``) or a directory; files inside a
    directory are keyed by the config hash so distinct runs never collide."""
    if out is not None and str(out).endswith(".json"):
        return Path(out)
    root = Path(out) if out is not None else (Path(result.config.output) if result.config.output else default_out_dir())
    return root / f"{result.config.name}-{result.config.digest()[:12]}.json"


def persist(result: ExperimentResult, out=None) -> Path:
    path = result_path(result, out)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(result.to_dict(), indent=2, sort_keys=True) + "\n")
    return path


def load(path) -> ExperimentResult:
    doc = json.loads(Path(path).read_text())
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ValueError(f"results schema version {version} is not {SCHEMA_VERSION}")
    cfg = ExperimentConfig.from_dict(doc["config"])
    metrics = [Metrics.from_dict(m) for m in doc["results"]]
    timing = doc.get("timing", {})
    return ExperimentResult(cfg, metrics, timing.get("runtime_s", 0.0), timing.get("timestamp", ""))


def comparable(doc: dict) -> dict:
    """Results document without the timing block."""
    return {k: v for k, v in doc.items() if k != "timing"}
