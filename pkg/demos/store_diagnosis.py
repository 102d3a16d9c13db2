"""Which kind of store does an endpoint keep?

Send one image twice on account A, then once on account B. A ban on A
means the defense bans; whether B is also refused tells a global store from
a per-account one. Three queries and one spare account settle it.

    python demos/store_diagnosis.py
"""

from oars_bench.core import QueryOutcome
from oars_bench.defense import build_sdm, sdm_query
from oars_bench.harness import select_victims
from oars_bench.models import generate_task
from oars_bench.oars import diagnose_store

task = generate_task(7)
x = select_victims(task, 1, seed=0)[0].x

for kind in ("none", "blacklight", "piha", "osd", "iiot"):
    sdm = build_sdm({"type": kind}, task.shape)

    def query(account, z):
        if sdm is None:
            return QueryOutcome.hard(int(task.model.hard_predict(z)))
        return sdm_query(sdm, account, z, task.model, "hard")

    found = diagnose_store(query, x, limit=50)
    print(f"{kind:>10}: {found.kind.value:<20} cost {found.total_queries} queries + {found.extra_accounts} account")
