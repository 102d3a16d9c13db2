"""Bounded query stores with nearest-neighbour scoring.

Each backend holds one feature family and evicts its oldest entry first
once ``capacity`` is reached.
"""

from __future__ import annotations

import enum
from array import array
from collections import Counter, deque

import numpy as np

from .extractors import FINGERPRINT_SIZE, BitSignature, Embedding, Fingerprint


class StoreScope(enum.Enum):
    GLOBAL = "global"
    PER_ACCOUNT = "per_account"


class FingerprintIndex:
    """Inverted index from hash value to the ids of entries containing it.

    Repeated hashes inside one fingerprint are keyed by their occurrence
    number, so set intersection of keys equals multiset intersection of
    hashes. Ids grow monotonically; posting arrays stay sorted, which makes
    FIFO eviction a pop from the front of each array.
    """

    def __init__(self, capacity: int):
        self.capacity = int(capacity)
        self._postings: dict[int, array] = {}
        self._live: deque = deque()  # key lists of live entries, oldest first
        self._next_id = 0

    def __len__(self):
        return len(self._live)

    @staticmethod
    def _keys(fp: Fingerprint) -> list[int]:
        seen: Counter = Counter()
        keys = []
        for h in fp.hashes:
            j = seen[h]
            seen[h] += 1
            keys.append((int.from_bytes(h, "big") << 6) | j)
        return keys

    def add(self, fp: Fingerprint) -> None:
        while len(self._live) >= self.capacity:
            self._evict()
        keys = self._keys(fp)
        eid = self._next_id
        self._next_id += 1
        for key in keys:
            post = self._postings.get(key)
            if post is None:
                post = self._postings[key] = array("q")
            post.append(eid)
        self._live.append(keys)

    def _evict(self):
        for key in self._live.popleft():
            post = self._postings[key]
            del post[0]
            if not post:
                del self._postings[key]

    def distances(self, fp: Fingerprint, k: int) -> list[float]:
        """The ``k`` smallest normalized Hamming distances to stored entries."""
        n = len(self._live)
        if not n:
            return []
        first = self._next_id - n
        posts = [self._postings.get(key) for key in self._keys(fp)]
        posts = [np.frombuffer(p, dtype=np.int64) for p in posts if p is not None]
        k = min(k, n)
        if not posts:
            return [1.0] * k
        counts = np.bincount(np.concatenate(posts) - first)
        if k == 1:
            best = np.array([counts.max()])
        else:
            top = min(k, counts.size)
            best = -np.sort(-np.partition(counts, counts.size - top)[counts.size - top:])
        dists = (1.0 - best / FINGERPRINT_SIZE).tolist()
        return dists + [1.0] * (k - len(dists))

    def clear(self):
        self._postings.clear()
        self._live.clear()


class _RingRows:
    """Fixed-width rows in a FIFO ring that grows up to ``capacity``."""

    def __init__(self, capacity: int, width: int, dtype):
        self.capacity = int(capacity)
        self._data = np.empty((min(64, self.capacity), width), dtype=dtype)
        self._count = 0
        self._head = 0  # slot of the oldest row once the ring is full

    def __len__(self):
        return self._count

    def add(self, row):
        if self._count < self.capacity:
            if self._count == len(self._data):
                grown = np.empty((min(2 * len(self._data), self.capacity), self._data.shape[1]), self._data.dtype)
                grown[: self._count] = self._data[: self._count]
                self._data = grown
            self._data[self._count] = row
            self._count += 1
        else:
            self._data[self._head] = row
            self._head = (self._head + 1) % self.capacity

    def rows(self) -> np.ndarray:
        return self._data[: self._count]

    def clear(self):
        self._count = 0
        self._head = 0


class BitStore:
    def __init__(self, capacity: int):
        self.capacity = int(capacity)
        self._ring = None
        self._nbits = None

    def __len__(self):
        return 0 if self._ring is None else len(self._ring)

    def add(self, sig: BitSignature):
        packed = np.packbits(sig.bits.astype(bool))
        if self._ring is None:
            self._ring = _RingRows(self.capacity, packed.size, np.uint8)
            self._nbits = sig.bits.size
        elif sig.bits.size != self._nbits:
            raise ValueError("bit signature length differs from stored signatures")
        self._ring.add(packed)

    def distances(self, sig: BitSignature, k: int) -> list[float]:
        if not len(self):
            return []
        packed = np.packbits(sig.bits.astype(bool))
        diff = np.unpackbits(self._ring.rows() ^ packed, axis=1).sum(axis=1) / self._nbits
        k = min(k, diff.size)
        return sorted(np.partition(diff, k - 1)[:k].tolist())

    def clear(self):
        if self._ring is not None:
            self._ring.clear()


class EmbeddingStore:
    def __init__(self, capacity: int):
        self.capacity = int(capacity)
        self._ring = None

    def __len__(self):
        return 0 if self._ring is None else len(self._ring)

    def add(self, emb: Embedding):
        if self._ring is None:
            self._ring = _RingRows(self.capacity, emb.vector.size, np.float64)
        self._ring.add(emb.vector)

    def distances(self, emb: Embedding, k: int) -> list[float]:
        if not len(self):
            return []
        d = np.linalg.norm(self._ring.rows() - emb.vector, axis=1)
        k = min(k, d.size)
        return sorted(np.partition(d, k - 1)[:k].tolist())

    def clear(self):
        if self._ring is not None:
            self._ring.clear()


_BACKENDS = {Fingerprint: FingerprintIndex, BitSignature: BitStore, Embedding: EmbeddingStore}


class QueryStore:
    """Extractor outputs keyed by account (or one global slot)."""

    GLOBAL_SLOT = "__global__"

    def __init__(self, scope: StoreScope = StoreScope.GLOBAL, capacity: int = 1_000_000):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.scope = StoreScope(scope)
        self.capacity = int(capacity)
        self._slots: dict = {}
        self.insertions = 0

    def _key(self, account):
        return self.GLOBAL_SLOT if self.scope is StoreScope.GLOBAL else account

    def _slot(self, feature, account, create: bool):
        key = self._key(account)
        slot = self._slots.get(key)
        if slot is None and create:
            slot = _BACKENDS[type(feature)](self.capacity)
            self._slots[key] = slot
        return slot

    def neighbour_distances(self, feature, k: int, account=None) -> list[float]:
        slot = self._slot(feature, account, create=False)
        if slot is None:
            return []
        if not isinstance(feature, _feature_type(slot)):
            raise TypeError(f"store holds {_feature_type(slot).__name__}, got {type(feature).__name__}")
        return slot.distances(feature, k)

    def insert(self, feature, account=None) -> None:
        slot = self._slot(feature, account, create=True)
        if not isinstance(feature, _feature_type(slot)):
            raise TypeError(f"store holds {_feature_type(slot).__name__}, got {type(feature).__name__}")
        slot.add(feature)
        self.insertions += 1

    def count(self, account=None) -> int:
        if account is None and self.scope is StoreScope.PER_ACCOUNT:
            return sum(len(s) for s in self._slots.values())
        slot = self._slots.get(self._key(account))
        return 0 if slot is None else len(slot)

    def reset(self) -> None:
        self._slots.clear()


def _feature_type(slot):
    for ftype, backend in _BACKENDS.items():
        if isinstance(slot, backend):
            return ftype
    raise TypeError(type(slot))
