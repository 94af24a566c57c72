"""Command line: ``taperprune run | sweep | report | extract | cost``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from ..graph import GraphSpec, build, build_extracted, count_macs, extract
from ..resources import F_of_sites, build_polynomial
from ..rho_solver import PruningSiteState
from ..tensorio import save_tensors
from .config import ConfigError, RunConfig
from .report import curve_report
from .run import RunAborted, _read_snapshot, run
from .sweep import format_table, mu_sweep, rows_as_dicts


def _config(args) -> tuple[RunConfig, Path | None]:
    if args.config is None:
        cfg, base = RunConfig(), None
    else:
        cfg, base = RunConfig.load(args.config), Path(args.config).resolve().parent
    if getattr(args, "seed", None) is not None:
        cfg = cfg.replace(seed=args.seed)
    return cfg, base


def cmd_run(args) -> int:
    cfg, base = _config(args)
    res = run(cfg, args.out, resume=args.resume, stop_after=args.until, base=base)
    print(f"iterations {res.iterations}  F {res.F_initial:.6g} -> {res.F_final:.6g} MACs ({res.F_final / res.F_initial:.4f})")
    for r in res.stop_reasons:
        print(f"  {r}")
    print(f"output in {res.out}")
    return 0


def cmd_sweep(args) -> int:
    cfg, base = _config(args)
    seeds = args.seeds if args.seeds else [cfg.seed]
    starts = {s: args.start_from.format(seed=s) for s in seeds} if args.start_from else None
    rows = mu_sweep(cfg, args.mu, args.out, seeds=seeds, target_fraction=args.target, window=args.window,
                    start_from=starts, workers=args.workers, config_base=base, reuse=args.reuse)
    table = format_table(rows)
    print(table)
    out = Path(args.out)
    (out / "sweep.txt").write_text(table + "\n")
    (out / "sweep.json").write_text(json.dumps(rows_as_dicts(rows), indent=2) + "\n")
    return 0 if all(r.error is None for r in rows) else 1


def cmd_report(args) -> int:
    rep = curve_report(args.metrics, phases=args.phases, targets=tuple(args.target), window=args.window,
                       knee_axis=None if args.knee_axis == "none" else args.knee_axis,
                       F_range=tuple(args.F_range) if args.F_range else None)
    print(rep.summary())
    if args.export:
        print(f"curve written to {rep.export_csv(args.export)}")
    return 0


def _graph_from_snapshot(path):
    tensors, meta = _read_snapshot(path)
    g = build(GraphSpec.from_dict({**meta["graph"], "init": {"seed": 0}}), "float64")
    g.load_weights({k[8:]: v for k, v in tensors.items() if k.startswith("weights/")})
    for name in g.site_names:
        g.sites[name] = PruningSiteState(name, tensors[f"rho/{name}"].copy(), tensors[f"D/{name}"].copy())
    return g, meta


def cmd_extract(args) -> int:
    g, meta = _graph_from_snapshot(args.snapshot)
    conf, dense = extract(g)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dense.init = {"weights": "pruned_weights.npz"}
    save_tensors(out / "pruned_weights.npz", conf.weights, {"masks": {k: v.tolist() for k, v in conf.masks.items()}})
    dense.save(out / "pruned_graph.json")
    macs = count_macs(build_extracted(conf, GraphSpec.from_dict({**dense.to_dict(), "init": {"seed": 0}})))
    kept = ", ".join(f"{k} {int(v.sum())}/{v.size}" for k, v in conf.masks.items())
    print(f"snapshot at iteration {meta['iteration']}: kept channels {kept}")
    print(f"extracted network: {macs} MACs ({macs / 1e9:.6g} GMAC), written to {out}")
    return 0


def cmd_cost(args) -> int:
    if args.snapshot:
        g, _ = _graph_from_snapshot(args.snapshot)
    else:
        cfg, base = _config(args)
        g = build(cfg.graph_spec(base))
    poly = build_polynomial(g)
    full = count_macs(g)
    print(f"full network: {full} MACs ({full / 1e9:.6g} GMAC)")
    if g.site_names:
        F = F_of_sites(poly, g.sites)
        print(f"expected F at current gates: {F:.6g} MACs ({F / full:.4f} of full)")
    print(f"{'term':<6} {'variables':<40} {'coefficient':>14}")
    for term, var, c in poly.coefficient_table():
        print(f"{term:<6} {var:<40} {c:>14.6g}")
    return 0


def parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="taperprune", description="Channel pruning under a tapering resource budget.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out=True):
        sp.add_argument("--config", help="run configuration (JSON)")
        sp.add_argument("--seed", type=int, help="override the configured seed")
        if out:
            sp.add_argument("--out", required=True, help="output directory")

    sp = sub.add_parser("run", help="execute a run configuration")
    common(sp)
    sp.add_argument("--resume", help="continue from a snapshot of the same configuration")
    sp.add_argument("--until", type=int, help="stop (with a snapshot) once this many iterations are done")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("sweep", help="one run per mu value, compared at a target F")
    common(sp)
    sp.add_argument("--mu", type=float, nargs="+", required=True)
    sp.add_argument("--seeds", type=int, nargs="+")
    sp.add_argument("--target", type=float, required=True, help="target F as a fraction of the initial F")
    sp.add_argument("--window", type=float, default=0.04, help="relative half-width of the accuracy window")
    sp.add_argument("--start-from", help="snapshot to branch from; '{seed}' is replaced per seed")
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--reuse", action="store_true", help="keep finished runs of the same configuration in --out")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("report", help="FLOPs-accuracy curve of a run")
    sp.add_argument("metrics", help="metrics.csv or a run directory")
    sp.add_argument("--target", type=float, nargs="*", default=[], help="F fractions for window-averaged accuracy")
    sp.add_argument("--window", type=float, default=0.04)
    sp.add_argument("--phases", nargs="+")
    sp.add_argument("--F-range", type=float, nargs=2, metavar=("LO", "HI"))
    sp.add_argument("--knee-axis", choices=("log", "linear", "none"), default="log")
    sp.add_argument("--export", help="write the sorted curve as CSV")
    sp.set_defaults(func=cmd_report)

    sp = sub.add_parser("extract", help="slice a snapshot down to its kept channels")
    sp.add_argument("snapshot")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_extract)

    sp = sub.add_parser("cost", help="MAC count and resource polynomial")
    common(sp, out=False)
    sp.add_argument("--snapshot", help="use the graph and gates of a snapshot")
    sp.set_defaults(func=cmd_cost)
    return p


def main(argv=None) -> int:
    args = parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, RunAborted, FileNotFoundError, ValueError) as exc:
        print(f"taperprune {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
