"""Vanilla NES against a Blacklight-style defense, then the same attack with OARS.

The vanilla attack dies on its second query: the gradient samples sit
within one quantization bucket of the clean image, so their fingerprints
match. The adaptive version first learns how far apart queries must be,
then only sends queries the defense accepts.

    python demos/vanilla_vs_oars.py
"""

from oars_bench.attacks import AttackConfig, AttackKind, run_vanilla
from oars_bench.defense import build_sdm
from oars_bench.harness import select_victims
from oars_bench.models import generate_task
from oars_bench.oars import OarsConfig, run_oars

task = generate_task(7)
victim = select_victims(task, 1, seed=0)[0]
cfg = AttackConfig(AttackKind.NES, targeted=True, target=victim.target, seed=0, query_budget=20_000)
print(f"victim class {victim.label}, target class {victim.target}")

sdm = build_sdm({"type": "blacklight"}, task.shape)
plain = run_vanilla(cfg, victim.x, sdm, task.model, victim.label, start=victim.start)
print(f"vanilla NES: {plain.reason.value} after {plain.queries_used} queries")

sdm = build_sdm({"type": "blacklight"}, task.shape)
adaptive = run_oars(cfg, OarsConfig(), victim.x, sdm, task.model, victim.label, start=victim.start)
print(f"OARS-NES:    {adaptive.reason.value} after {adaptive.queries_used} queries "
      f"({adaptive.collisions_seen} refused along the way)")
print(f"store diagnosis: {adaptive.adapted['diagnosis']}")
print(f"adapted sigma: {adaptive.adapted['sigma']}, adapted step: {adaptive.adapted['step']}")
