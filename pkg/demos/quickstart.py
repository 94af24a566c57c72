"""Prune a small CNN to half its multiply count and look at the curve.

A narrow network (16 channels per block) keeps this to a couple of minutes
on one core.  The steps are the ones the full-size runs use:

1. pretrain with the gates bypassed,
2. prune with the adaptive schedule until F is below 50% of the start,
3. fine-tune the extracted channel set with frozen gates,
4. read the FLOPs-accuracy curve back from metrics.csv.
"""

import sys
from pathlib import Path

import numpy as np

from taperprune.harness import Phase, RunConfig, curve_report, read_metrics, run

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_runs/quickstart")
graph = {"builtin": "toy_cnn", "widths": [16, 16, 16]}

pre = run(RunConfig(graph=graph, phases=[Phase("pretrain", gates="off", iterations=1200)], eval_interval=400), out / "pretrain")
print(f"pretrained: {read_metrics(pre.out)['accuracy'][-1]:.3f} validation accuracy at {pre.F_initial:.0f} MACs")

cfg = RunConfig(
    graph=graph,
    weights=str(pre.out / "weights.npz"),
    phases=[
        Phase("prune", F_fraction_below=0.5, max_iterations=4000),
        Phase("tune", gates="frozen", iterations=200, lr=0.001),
    ],
    eval_interval=50,
)
res = run(cfg, out / "prune")
m = read_metrics(res.out)
err = np.abs(m["F"] - m["F_sched"]) / res.F_initial
print(f"pruned to {res.F_final / res.F_initial:.3f} of the MACs in {res.iterations} iterations")
print(f"worst |F - F_sched| after 500 iterations: {100 * err[m['iteration'] > 500].max():.2f}% of the start")
print("kept channels:", {k: int(v.sum()) for k, v in res.configuration.masks.items()})

rep = curve_report(res.out, targets=(0.5,), knee_axis=None)
print(rep.summary())
print(f"curve written to {rep.export_csv(out / 'curve.csv')}")
