from collections import Counter

import numpy as np
import pytest

from oars_bench.core import OutcomeKind
from oars_bench.defense import (FINGERPRINT_SIZE, ActionKind, BitSignature, Embedding, Fingerprint, Metric,
                                PihaHash, PixelHash, RandomProjectionEncoder, SdmEnsemble, SdmInstance,
                                SimilarityProcedure, build_sdm, lbp_codes, pixel_hash, piha_hash, quantize,
                                reset_store, sdm_query)
from oars_bench.defense.store import FingerprintIndex, QueryStore, StoreScope


def fingerprint_distance(a: Fingerprint, b: Fingerprint) -> float:
    """Brute-force oracle: 1 - |multiset intersection| / 50."""
    shared = sum((Counter(a.hashes) & Counter(b.hashes)).values())
    return 1.0 - shared / FINGERPRINT_SIZE


def random_fingerprint(rng, pool):
    picks = sorted(pool[i] for i in rng.choice(len(pool), FINGERPRINT_SIZE, replace=True))
    return Fingerprint(tuple(picks))


def test_quantize_buckets():
    np.testing.assert_array_equal(quantize(np.array([0.0, 0.19, 0.2, 1.0]), 50), [0, 0, 1, 5])


def test_pixel_hash_deterministic_and_salted(task, rng):
    x, _ = task.sample(rng)
    assert pixel_hash(x) == pixel_hash(x.copy())
    assert pixel_hash(x) != pixel_hash(x, salt="secret")
    assert len(pixel_hash(x).hashes) == FINGERPRINT_SIZE
    with pytest.raises(ValueError):
        pixel_hash(np.zeros(10))


def test_pixel_hash_ignores_changes_below_quantization(task, rng):
    x, _ = task.sample(rng)
    # a value in the middle of its bucket survives a tiny nudge
    mid = (np.floor(x * 255 / 50) + 0.5) * 50 / 255
    assert pixel_hash(mid) == pixel_hash(np.clip(mid + 1e-3, 0, 1))


def test_fingerprint_index_matches_brute_force(rng):
    pool = [bytes(rng.integers(0, 256, 32, dtype=np.uint8)) for _ in range(80)]
    stored = [random_fingerprint(rng, pool) for _ in range(30)]
    index = FingerprintIndex(capacity=1000)
    for fp in stored:
        index.add(fp)
    for _ in range(20):
        probe = random_fingerprint(rng, pool)
        expected = sorted(fingerprint_distance(probe, s) for s in stored)[:5]
        assert index.distances(probe, 5) == pytest.approx(expected)


def test_fingerprint_index_fifo_eviction(rng):
    pool = [bytes([i]) * 32 for i in range(200)]
    fps = [Fingerprint(tuple(sorted(pool[50 * i:50 * i + 50]))) for i in range(4)]
    index = FingerprintIndex(capacity=3)
    for fp in fps:
        index.add(fp)
    assert len(index) == 3
    assert index.distances(fps[0], 1) == [1.0]  # evicted
    assert index.distances(fps[3], 1) == [0.0]


def test_query_store_scopes_and_types():
    store = QueryStore(StoreScope.PER_ACCOUNT)
    e = Embedding(np.array([1.0, 0.0]))
    store.insert(e, "a")
    assert store.neighbour_distances(e, 1, "a") == [0.0]
    assert store.neighbour_distances(e, 1, "b") == []
    with pytest.raises(TypeError):
        store.insert(BitSignature(np.zeros(8, dtype=bool)), "a")
    store.reset()
    assert store.count() == 0
    with pytest.raises(ValueError):
        QueryStore(capacity=0)


def test_knn_l2_mean_over_present_entries():
    proc = SimilarityProcedure(Metric.L2, k=3, threshold=0.5)
    store = QueryStore()
    assert proc.score(Embedding(np.zeros(2)), store) is None
    store.insert(Embedding(np.array([1.0, 0.0])))
    store.insert(Embedding(np.array([0.0, 3.0])))
    # fewer than k stored: mean over the two present
    assert proc.score(Embedding(np.zeros(2)), store) == pytest.approx(2.0)


def test_piha_hash_shape_and_identity(task, rng):
    x, _ = task.sample(rng)
    sig = piha_hash(x)
    assert sig == PihaHash()(x)
    assert sig.bits.dtype == bool and len(sig) % 256 == 0
    codes = lbp_codes(np.arange(25, dtype=float).reshape(5, 5))
    assert codes.shape == (5, 5)
    # on a ramp, 4 of the 8 neighbours of the centre (12) are >= 12
    assert bin(int(codes[2, 2])).count("1") == 4


def test_random_projection_is_unit_norm(task, rng):
    enc = RandomProjectionEncoder(task.dim, 32, seed=1)
    x, _ = task.sample(rng)
    v = enc(x).vector
    assert v.shape == (32,) and np.linalg.norm(v) == pytest.approx(1.0)


@pytest.mark.parametrize("kind", ["blacklight", "piha", "iiot"])
def test_duplicate_rejected_then_reset(kind, task, rng):
    sdm = build_sdm({"type": kind}, task.shape)
    x, _ = task.sample(rng)
    assert sdm_query(sdm, 0, x, task.model).answered
    assert sdm_query(sdm, 0, x, task.model).kind is OutcomeKind.REJECTED
    reset_store(sdm)
    assert sdm_query(sdm, 0, x, task.model).answered


def test_osd_bans_and_keeps_banning(task, rng):
    sdm = build_sdm({"type": "osd"}, task.shape)
    x, _ = task.sample(rng)
    assert sdm_query(sdm, "a", x, task.model).answered
    assert sdm_query(sdm, "a", x, task.model).kind is OutcomeKind.BANNED
    y, _ = task.sample(rng)
    assert sdm_query(sdm, "a", y, task.model).kind is OutcomeKind.BANNED
    # per-account store: another account is unaffected
    assert sdm_query(sdm, "b", x, task.model).answered


def test_blacklight_store_is_global(task, rng):
    sdm = build_sdm({"type": "blacklight"}, task.shape)
    x, _ = task.sample(rng)
    sdm_query(sdm, "a", x, task.model)
    assert sdm_query(sdm, "b", x, task.model).kind is OutcomeKind.REJECTED


def test_ensemble_any_member_actions_and_ban_wins(task, rng):
    strict = build_sdm({"type": "blacklight"}, task.shape)
    banning = build_sdm({"type": "osd", "threshold": 1e-9}, task.shape)
    ens = SdmEnsemble([strict, banning])
    x, _ = task.sample(rng)
    assert ens.query(0, x, task.model).answered
    assert ens.query(0, x, task.model).kind is OutcomeKind.BANNED
    assert strict.store.count() == 2 and banning.store.count() == 2


def test_build_sdm_validation(task):
    assert build_sdm(None, task.shape) is None
    assert build_sdm({"type": "none"}, task.shape) is None
    with pytest.raises(ValueError):
        build_sdm({"type": "blacklight", "bogus": 1}, task.shape)
    with pytest.raises(ValueError):
        build_sdm({"type": "nope"}, task.shape)
    with pytest.raises(ValueError):
        SdmInstance(PixelHash(), SimilarityProcedure(Metric.L2, 1, 0.5))
    sdm = build_sdm({"type": "blacklight", "action": "ban"}, task.shape)
    assert sdm.action is ActionKind.BAN


def test_blacklight_collides_at_threshold_distance(task, rng):
    sdm = build_sdm({"type": "blacklight", "threshold": 0.5}, task.shape)
    x, _ = task.sample(rng)
    y, _ = task.sample(rng)
    fx, fy = sdm.extractor(x), sdm.extractor(y)
    sdm.observe(0, x)
    d = fingerprint_distance(fx, fy)
    assert sdm.similarity.score(fy, sdm.store, 0) == pytest.approx(d)
    assert sdm.similarity.collides(d) == (d <= 0.5)
