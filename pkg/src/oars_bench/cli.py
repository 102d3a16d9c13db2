"""Command-line front end: run, diagnose, calibrate, fpr, sweep.

Exit codes: 0 on success, 1 for configuration or usage errors, 2 when a
run fails.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from importlib import resources
from pathlib import Path

from . import harness
from .defense import build_sdm, model_answer, sdm_query
from .harness import ConfigError, ExperimentConfig
from .oars import diagnose_store

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad usage; here usage errors are config errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def bundled_config(name: str) -> Path:
    """Path of a config shipped with the package (``demo.json``, ``osd.json``)."""
    return Path(str(resources.files("oars_bench") / "configs" / name))


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="experiment config (JSON)")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--jobs", type=int, default=1, help="victims evaluated in parallel")
    common.add_argument("--out", help="results file (*.json) or directory")
    common.add_argument("--quiet", action="store_true", help="no progress output")

    p = _Parser(prog="oars-bench", description="Attacks against stateful defenses, with and without OARS.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("run", parents=[common], help="run the configured experiment")
    d = sub.add_parser("diagnose", parents=[common], help="classify the configured defense")
    d.add_argument("--limit", type=int, default=200, help="queries on the first account before giving up")
    c = sub.add_parser("calibrate", parents=[common], help="threshold for a target false positive rate")
    c.add_argument("--target-fpr", type=float, default=0.002)
    c.add_argument("--samples", type=int, default=None, help="benign samples (default 100 / target)")
    f = sub.add_parser("fpr", parents=[common], help="false positive rate on fresh benign samples")
    f.add_argument("-n", "--samples", type=int, default=10_000)
    f.add_argument("--account-policy", choices=("single", "per_query"), default="single")
    s = sub.add_parser("sweep", parents=[common], help="rerun under a grid of defense settings")
    s.add_argument("--grid", default="wq",
                   help="'wq' for the window/quantization grid, or 'threshold=0.3,0.5,0.7'")
    s.add_argument("--calibrate-fpr", type=float, default=None,
                   help="calibrate each cell's threshold to this benign FPR first (default 0.002 for "
                        "the wq grid, off for threshold sweeps; 0 disables)")
    return p


def parse_grid(spec: str) -> list:
    if spec == "wq":
        return harness.grid_cells()
    key, _, values = spec.partition("=")
    if key not in ("threshold", "window", "quantization") or not values:
        raise ConfigError(f"bad grid spec {spec!r}")
    try:
        nums = [float(v) for v in values.split(",")]
    except ValueError as err:
        raise ConfigError(f"bad grid values in {spec!r}") from err
    return [{key: v if key == "threshold" else int(v)} for v in nums]


def _load(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config)
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        cfg.seed = args.seed
    if args.jobs < 1:
        raise ConfigError("--jobs must be at least 1")
    return cfg


def _progress(args):
    if args.quiet:
        return None

    def show(name, rec):
        print(f"  {name} victim {rec.victim}: {rec.reason} after {rec.queries} queries", flush=True)

    return show


def _summary_lines(result) -> list:
    lines = []
    for m in result.metrics:
        q = "-" if m.mean_queries_success is None else f"{m.mean_queries_success:.0f}"
        lines.append(f"{m.attack:>16}: ASR {m.asr:.0%} ({m.successes}/{m.victims}), "
                     f"mean queries on success {q}, mean accounts {m.accounts_used:.1f}")
    return lines


def cmd_run(args) -> int:
    cfg = _load(args)
    result = harness.run_experiment(cfg, jobs=args.jobs, progress=_progress(args))
    path = harness.persist(result, args.out)
    print("\n".join(_summary_lines(result)))
    print(f"results written to {path}")
    return EXIT_OK


def cmd_diagnose(args) -> int:
    cfg = _load(args)
    task = harness.build_task(cfg.task)
    sdm = build_sdm(cfg.sdm, task.shape)
    victim = harness.select_victims(task, 1, cfg.seed)[0]

    def query(account, x):
        if sdm is None:
            return model_answer(task.model, x, "hard")
        return sdm_query(sdm, account, x, task.model, "hard")

    found = diagnose_store(query, victim.x, args.limit)
    print(f"classification: {found.kind.value}")
    print(f"cost: {found.total_queries} queries ({found.queries_on_a} on account A + 1 on B), "
          f"{found.extra_accounts} extra account")
    _write_json(args.out, {"classification": found.kind.value, "queries": found.total_queries,
                           "queries_on_a": found.queries_on_a, "extra_accounts": found.extra_accounts})
    return EXIT_OK


def cmd_calibrate(args) -> int:
    cfg = _load(args)
    if cfg.sdm is None:
        raise ConfigError("calibration needs a defense in the config")
    task = harness.build_task(cfg.task)
    if args.samples:
        n = args.samples
    else:
        n = int(100 / args.target_fpr) if args.target_fpr > 0 else 10_000
    cal = harness.calibrate_threshold(cfg.sdm, args.target_fpr, harness.benign_stream(task, n, cfg.seed), task.shape)
    note = "" if cal.attained else " (target not attainable)"
    print(f"threshold {cal.threshold:.6g} gives FPR {cal.fpr:.4%} on {n} samples{note}")
    _write_json(args.out, {"threshold": cal.threshold, "fpr": cal.fpr, "attained": cal.attained, "samples": n})
    return EXIT_OK


def cmd_fpr(args) -> int:
    cfg = _load(args)
    task = harness.build_task(cfg.task)
    sdm = build_sdm(cfg.sdm, task.shape)
    rate = harness.measure_fpr(sdm, harness.benign_stream(task, args.samples, cfg.seed), task.model, args.account_policy)
    print(f"FPR {rate:.4%} on {args.samples} benign samples")
    _write_json(args.out, {"fpr": rate, "samples": args.samples, "account_policy": args.account_policy})
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load(args)
    cells = parse_grid(args.grid)
    target = args.calibrate_fpr
    if target is None:
        target = 0.002 if args.grid == "wq" else 0.0
    if not 0.0 <= target < 1.0:
        raise ConfigError("--calibrate-fpr must lie in [0, 1)")
    if target and any("threshold" in cell for cell in cells):
        raise ConfigError("a threshold sweep cannot also calibrate the threshold")
    rows = harness.reconfiguration_sweep(cfg, cells, jobs=args.jobs, progress=_progress(args),
                                         calibrate_fpr=target or None)
    table = []
    for cell, result in rows:
        path = harness.persist(result, None if args.out is None or str(args.out).endswith(".json") else args.out)
        for line in _summary_lines(result):
            print(f"{json.dumps(cell, sort_keys=True)} {line.strip()}")
        table.append({"cell": cell, "summary": [m.summary() for m in result.metrics], "file": str(path)})
    if args.out and str(args.out).endswith(".json"):
        _write_json(args.out, {"cells": table})
    return EXIT_OK


def _write_json(out, doc) -> None:
    if not out:
        return
    path = Path(out)
    if not str(out).endswith(".json"):
        path = path / "output.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


COMMANDS = {"run": cmd_run, "diagnose": cmd_diagnose, "calibrate": cmd_calibrate, "fpr": cmd_fpr, "sweep": cmd_sweep}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as stop:
        return int(stop.code or 0)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as err:  # noqa: BLE001 - any failure during a run maps to exit 2
        print(f"run failed: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
