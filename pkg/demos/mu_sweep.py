"""Pruning speed against quality: the mu sweep on the full-size toy CNN.

Each seed gets one pretrained network and one shared exponential prefix down
to 15% of the MACs.  From the prefix snapshot, three adaptive runs with mu
spaced by sqrt(10) prune on to 3%.  Smaller mu caps the schedule step
harder once the quality pressure |lambda_F| grows, so the runs take longer
and should end up more accurate at the 5% target.

Expect roughly ten minutes per seed on one core.  Pass seeds as arguments.
"""

import math
import sys
from pathlib import Path

from taperprune.harness import DESK_CONTROLLER, Phase, RunConfig, format_table, mu_sweep, run

seeds = [int(s) for s in sys.argv[1:]] or [0]
root = Path("demo_runs/mu_sweep")
starts = {}
for seed in seeds:
    pre = run(RunConfig(seed=seed, phases=[Phase("pretrain", gates="off", iterations=1500)], eval_interval=500), root / f"pretrain_s{seed}")
    prefix = run(
        RunConfig(
            seed=seed,
            weights=str(pre.out / "weights.npz"),
            controller={**DESK_CONTROLLER, "schedule": "exponential", "r": 300.0},
            phases=[Phase("prefix", F_fraction_below=0.15, max_iterations=6000)],
            eval_interval=100,
        ),
        root / f"prefix_s{seed}",
    )
    starts[seed] = next((prefix.out / "snapshots").glob("final_*.npz"))
    print(f"seed {seed}: prefix reached {prefix.F_final / prefix.F_initial:.3f} of the MACs after {prefix.iterations} iterations")

branch = RunConfig(
    controller={**DESK_CONTROLLER, "r": 100.0},
    start_from=str(starts[seeds[0]]),
    phases=[Phase("prune", F_fraction_below=0.03, max_iterations=15000)],
    eval_interval=100,
    eval_dense=[{"F_fraction": [0.03, 0.15], "interval": 10}, {"F_fraction": [0.048, 0.052], "interval": 1}],
)
rows = mu_sweep(branch, [1e-2, 1e-2 / math.sqrt(10), 1e-3], root / "sweep", seeds=seeds, target_fraction=0.05,
                start_from=starts, reuse=True)
print(format_table(rows))
