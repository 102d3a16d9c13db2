"""Raising the detection threshold: more false positives, little protection.

A higher threshold flags more benign traffic. OARS reacts by spreading its
gradient samples further apart (larger adapted sigma), and keeps
succeeding. Takes a couple of minutes.

    python demos/threshold_tradeoff.py
"""

import numpy as np

from oars_bench.defense import build_sdm
from oars_bench.harness import ExperimentConfig, benign_stream, measure_fpr, run_experiment
from oars_bench.models import generate_task

task = generate_task(7)
benign = benign_stream(task, 5000, seed=1)

print("threshold   benign FPR   OARS-NES ASR   mean sigma")
for threshold in (0.3, 0.5, 0.7):
    sdm_cfg = {"type": "blacklight", "threshold": threshold}
    fpr = measure_fpr(build_sdm(sdm_cfg, task.shape), benign, task.model)
    cfg = ExperimentConfig(name="tradeoff", seed=0, sdm=sdm_cfg, victims=8,
                           attacks=[{"kind": "nes", "oars": {}, "query_budget": 30_000}])
    m = run_experiment(cfg).metrics[0]
    sigma = np.mean([s for r in m.records for s in r.adapted.get("sigma", [])])
    print(f"{threshold:>9.1f}   {fpr:>10.2%}   {m.asr:>12.0%}   {sigma:>10.4f}")
