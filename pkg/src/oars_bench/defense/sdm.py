"""Composed stateful defenses: extract, score, store, then act."""

from __future__ import annotations

import enum
import threading
from dataclasses import dataclass

import numpy as np

from ..core import QueryOutcome
from ..models import MlpModel, load_weights
from .extractors import (
    ModelEncoder,
    PihaHash,
    PixelHash,
    RandomProjectionEncoder,
    default_window,
)
from .store import QueryStore, StoreScope


class ActionKind(enum.Enum):
    REJECT = "reject"
    BAN = "ban"


class Metric(enum.Enum):
    HAMMING = "hamming"
    L2 = "l2"


@dataclass(frozen=True)
class SimilarityProcedure:
    """Mean distance to the ``k`` nearest stored features.

    A query collides when that mean is at most ``threshold``. With fewer
    than ``k`` stored entries the mean runs over those present.
    """

    metric: Metric
    k: int = 1
    threshold: float = 0.5

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if self.metric is Metric.HAMMING and not 0.0 <= self.threshold <= 1.0:
            raise ValueError("Hamming thresholds live in [0, 1]")

    def score(self, feature, store: QueryStore, account=None) -> float | None:
        _check_family(self.metric, feature)
        dists = store.neighbour_distances(feature, self.k, account)
        if not dists:
            return None
        return float(np.mean(dists))

    def collides(self, score: float | None) -> bool:
        return score is not None and score <= self.threshold


def _check_family(metric: Metric, feature):
    from .extractors import BitSignature, Embedding, Fingerprint

    ok = isinstance(feature, (Fingerprint, BitSignature)) if metric is Metric.HAMMING else isinstance(feature, Embedding)
    if not ok:
        raise TypeError(f"{type(feature).__name__} cannot be scored with {metric.value} distance")


def similarity_score(feature, store: QueryStore, proc: SimilarityProcedure, account=None):
    return proc.score(feature, store, account)


def _extractor_metric(extractor) -> Metric:
    if isinstance(extractor, (PixelHash, PihaHash)):
        return Metric.HAMMING
    return Metric.L2


def model_answer(model: MlpModel, x, label_mode: str) -> QueryOutcome:
    probs = model.soft_predict(x)
    if label_mode == "hard":
        return QueryOutcome.hard(int(np.argmax(probs)))
    return QueryOutcome.soft(probs)


class SdmInstance:
    """Extractor + query store + similarity procedure + action function.

    ``query`` is linearizable: the score/insert/act sequence runs under one
    lock, so concurrent duplicates see each other.
    """

    def __init__(self, extractor, similarity: SimilarityProcedure, action: ActionKind = ActionKind.REJECT,
                 store: QueryStore | None = None, name: str = "sdm"):
        if _extractor_metric(extractor) is not similarity.metric:
            raise ValueError(f"{type(extractor).__name__} output cannot use {similarity.metric.value} similarity")
        self.extractor = extractor
        self.similarity = similarity
        self.action = ActionKind(action)
        self.store = store if store is not None else QueryStore()
        self.name = name
        self.banned: set = set()
        self.lock = threading.RLock()
        self.queries_seen = 0

    @property
    def threshold(self) -> float:
        return self.similarity.threshold

    def observe(self, account, x) -> float | None:
        """Score ``x`` against the store and insert it; returns the score."""
        feature = self.extractor(x)
        with self.lock:
            score = self.similarity.score(feature, self.store, account)
            self.store.insert(feature, account)
        return score

    def _check(self, account, x) -> bool:
        """Score, insert and decide. Caller holds the lock."""
        feature = self.extractor(x)
        score = self.similarity.score(feature, self.store, account)
        self.store.insert(feature, account)
        return self.similarity.collides(score)

    def is_banned(self, account) -> bool:
        return self.action is ActionKind.BAN and account in self.banned

    def query(self, account, x, model: MlpModel, label_mode: str = "soft") -> QueryOutcome:
        with self.lock:
            self.queries_seen += 1
            if self.is_banned(account):
                return QueryOutcome.banned()
            if self._check(account, x):
                if self.action is ActionKind.BAN:
                    self.banned.add(account)
                    return QueryOutcome.banned()
                return QueryOutcome.rejected()
        return model_answer(model, x, label_mode)

    def reset(self) -> None:
        with self.lock:
            self.store.reset()


class SdmEnsemble:
    """Several defenses answering as one; any member collision actions."""

    def __init__(self, members, name: str = "ensemble"):
        members = list(members)
        if not members:
            raise ValueError("an ensemble needs at least one member")
        self.members = members
        self.name = name
        self.lock = threading.RLock()
        self.queries_seen = 0

    @property
    def action(self) -> ActionKind:
        if any(m.action is ActionKind.BAN for m in self.members):
            return ActionKind.BAN
        return ActionKind.REJECT

    def query(self, account, x, model: MlpModel, label_mode: str = "soft") -> QueryOutcome:
        with self.lock:
            self.queries_seen += 1
            for m in self.members:
                m.lock.acquire()
            try:
                if any(m.is_banned(account) for m in self.members):
                    return QueryOutcome.banned()
                hits = [m for m in self.members if m._check(account, x)]
                if hits:
                    bans = [m for m in hits if m.action is ActionKind.BAN]
                    for m in bans:
                        m.banned.add(account)
                    return QueryOutcome.banned() if bans else QueryOutcome.rejected()
            finally:
                for m in reversed(self.members):
                    m.lock.release()
        return model_answer(model, x, label_mode)

    def reset(self) -> None:
        for m in self.members:
            m.reset()


def sdm_query(sdm, account, x, model: MlpModel, label_mode: str = "soft") -> QueryOutcome:
    return sdm.query(account, x, model, label_mode)


def reset_store(sdm) -> None:
    sdm.reset()


def ensemble_query(members, account, x, model: MlpModel, label_mode: str = "soft") -> QueryOutcome:
    members = list(members)
    if len(members) == 1:
        return members[0].query(account, x, model, label_mode)
    return SdmEnsemble(members).query(account, x, model, label_mode)


# -- configuration ---------------------------------------------------------

SDM_DEFAULTS = {
    "blacklight": {"quantization": 50, "stride": 1, "k": 1, "threshold": 0.5, "action": "reject", "scope": "global"},
    "piha": {"block": 7, "low_pass": True, "k": 1, "threshold": 0.05, "action": "reject", "scope": "global"},
    "osd": {"k": 50, "threshold": 1.44, "action": "ban", "scope": "per_account", "embedding_dim": 32},
    "iiot": {"k": 11, "threshold": 0.21, "action": "reject", "scope": "per_account", "embedding_dim": 32},
}

_KNOWN_KEYS = {
    "type", "window", "quantization", "stride", "block", "low_pass", "k", "threshold", "action", "scope",
    "capacity", "salt", "members", "embedding_dim", "encoder_seed", "encoder_weights", "name",
}


def build_sdm(cfg: dict | None, input_shape):
    """Instantiate a defense from a configuration mapping.

    ``None`` or ``{"type": "none"}`` means an undefended endpoint and returns
    ``None``. Unset fields take the defaults of the named defense.
    """
    if cfg is None:
        return None
    if not isinstance(cfg, dict):
        raise ValueError("defense configuration must be a mapping")
    unknown = set(cfg) - _KNOWN_KEYS
    if unknown:
        raise ValueError(f"unknown defense fields: {sorted(unknown)}")
    kind = str(cfg.get("type", "none")).lower()
    if kind == "none":
        return None
    if kind == "ensemble":
        members = cfg.get("members") or []
        if not members:
            raise ValueError("ensemble needs members")
        return SdmEnsemble([build_sdm(m, input_shape) for m in members], name=cfg.get("name", "ensemble"))
    if kind not in SDM_DEFAULTS:
        raise ValueError(f"unknown defense type {kind!r}")
    c = {**SDM_DEFAULTS[kind], **{k: v for k, v in cfg.items() if v is not None}}
    input_shape = tuple(input_shape)
    input_dim = int(np.prod(input_shape))
    if kind == "blacklight":
        window = int(c.get("window") or default_window(input_shape))
        extractor = PixelHash(window, float(c["quantization"]), int(c["stride"]), str(c.get("salt", "")).encode())
        metric = Metric.HAMMING
    elif kind == "piha":
        extractor = PihaHash(int(c["block"]), bool(c["low_pass"]))
        metric = Metric.HAMMING
    else:
        if c.get("encoder_weights"):
            extractor = ModelEncoder(load_weights(c["encoder_weights"]))
        else:
            extractor = RandomProjectionEncoder(input_dim, int(c["embedding_dim"]), int(c.get("encoder_seed", 0)))
        metric = Metric.L2
    store = QueryStore(StoreScope(c["scope"]), int(c.get("capacity", 1_000_000)))
    sim = SimilarityProcedure(metric, int(c["k"]), float(c["threshold"]))
    return SdmInstance(extractor, sim, ActionKind(c["action"]), store, name=c.get("name", kind))
