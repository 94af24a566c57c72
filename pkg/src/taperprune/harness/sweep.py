"""Pruning-speed sweeps: one run per (mu, seed), compared at a target F."""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .config import RunConfig
from .report import window_accuracy
from .run import read_metrics, run

log = logging.getLogger(__name__)


@dataclass
class SweepRow:
    mu: float
    seed: int
    iterations_to_target: int | None
    window_accuracy: float
    window_evaluations: int
    out: str
    error: str | None = None


def iterations_to_target(metrics: dict, F_initial: float, target: float) -> int | None:
    """Iterations from the first row until ``F`` first drops to ``target`` of ``F_initial``."""
    hit = np.flatnonzero(metrics["F"] <= target * F_initial)
    if len(hit) == 0:
        return None
    return int(metrics["iteration"][hit[0]] - metrics["iteration"][0])


def _one(args) -> SweepRow:
    cfg_dict, mu, seed, out, target, window, base, reuse = args
    try:
        cfg = RunConfig.from_dict(cfg_dict)
        info = Path(out) / "run.json"
        done = reuse and info.exists() and json.loads(info.read_text())["fingerprint"] == cfg.fingerprint()
        if not done:
            run(cfg, out, base=Path(base) if base else None)
        F_initial = json.loads(info.read_text())["F_initial"]
        m = read_metrics(out)
        acc, n = window_accuracy(m["F"] / F_initial, m["accuracy"], target, window)
        return SweepRow(mu, seed, iterations_to_target(m, F_initial, target), acc, n, str(out))
    except Exception as exc:  # reported per row, the other runs go on
        log.exception("sweep run mu=%g seed=%d failed", mu, seed)
        return SweepRow(mu, seed, None, math.nan, 0, str(out), f"{type(exc).__name__}: {exc}")


def mu_sweep(
    base: RunConfig,
    mus,
    out_dir,
    *,
    seeds=(0,),
    target_fraction: float,
    window: float = 0.04,
    start_from: dict | None = None,
    workers: int = 1,
    config_base: Path | None = None,
    reuse: bool = False,
) -> list[SweepRow]:
    """Run ``base`` once per ``(mu, seed)`` and measure each run at the target.

    ``target_fraction`` is relative to the run's initial ``F``.  Iterations
    are counted from the first row of the run, which for a branched run is
    the branch point.  ``start_from`` optionally maps a seed to the snapshot
    its runs branch from (e.g. a shared pruning prefix).  With ``reuse``, a
    finished run of the identical configuration already in ``out_dir`` is
    read back instead of repeated, so an interrupted sweep can be continued.
    """
    mus = [float(m) for m in mus]
    if len(mus) < 2:
        raise ValueError("a sweep needs at least two mu values")
    out_dir = Path(out_dir)
    jobs = []
    for mu in mus:
        for seed in seeds:
            changes = {"seed": int(seed), "controller": {**base.controller, "mu": mu}}
            if start_from is not None:
                changes["start_from"] = str(start_from[seed])
            cfg = base.replace(**changes)
            out = out_dir / f"mu{mu:.6g}_seed{seed}"
            jobs.append((cfg.to_dict(), mu, int(seed), out, target_fraction, window, str(config_base) if config_base else None, reuse))
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            return list(pool.map(_one, jobs))
    return [_one(j) for j in jobs]


def summarize(rows: list[SweepRow]) -> list[dict]:
    """Per-mu means and spreads over seeds, largest mu first."""
    out = []
    for mu in sorted({r.mu for r in rows}, reverse=True):
        rs = [r for r in rows if r.mu == mu]
        ok = [r for r in rs if r.error is None and r.iterations_to_target is not None]
        its = np.array([r.iterations_to_target for r in ok], dtype=float)
        acc = np.array([r.window_accuracy for r in ok])
        out.append({
            "mu": mu,
            "runs": len(rs),
            "failed": len(rs) - len(ok),
            "iterations_mean": float(its.mean()) if len(ok) else math.nan,
            "accuracy_mean": float(np.nanmean(acc)) if len(ok) else math.nan,
            "accuracy_std": float(np.nanstd(acc, ddof=1)) if len(ok) > 1 else math.nan,
        })
    return out


def format_table(rows: list[SweepRow]) -> str:
    lines = [f"{'mu':>10} {'seed':>5} {'iters':>7} {'window acc':>10} {'n':>4}  note"]
    for r in rows:
        its = "-" if r.iterations_to_target is None else str(r.iterations_to_target)
        lines.append(f"{r.mu:>10.4g} {r.seed:>5d} {its:>7} {r.window_accuracy:>10.4f} {r.window_evaluations:>4d}  {r.error or ''}")
    lines.append("")
    lines.append(f"{'mu':>10} {'runs':>5} {'mean iters':>10} {'mean acc':>9} {'acc std':>8}")
    for s in summarize(rows):
        lines.append(f"{s['mu']:>10.4g} {s['runs']:>5d} {s['iterations_mean']:>10.1f} {s['accuracy_mean']:>9.4f} {s['accuracy_std']:>8.4f}")
    return "\n".join(lines)


def rows_as_dicts(rows: list[SweepRow]) -> list[dict]:
    return [asdict(r) for r in rows]
