"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The experiment criteria share runs through session fixtures:

* pretraining, gates bypassed, 1500 iterations per seed;
* a 100% to 50% run with the desk controller defaults per seed
  (tracking and repeatability);
* a shared exponential prefix per seed down to 15% of the initial F,
  from which the slow-pruning branches start: three adaptive runs with mu
  spaced by sqrt(10) (sweep) and one exponential run (schedule shape).

Set ``TAPERPRUNE_ACCEPTANCE_DIR`` to keep the runs between sessions; runs of
an unchanged configuration are then read back instead of repeated.
"""

import json
import math
import os
import time
from pathlib import Path

import numpy as np
import pytest

from taperprune.controller import ControllerConfig, ControllerState, schedule_step_cap, update_F_sched
from taperprune.gate import GateConfig, gate_boundaries, gate_forward, gate_value, sigmoid
from taperprune.graph import GraphSpec, build, build_extracted, count_macs, extract, forward_eval
from taperprune.harness import DESK_CONTROLLER, Phase, RunConfig, curve_report, mu_sweep, read_metrics, run, summarize
from taperprune.harness.models import toy_cnn_spec
from taperprune.harness.sweep import format_table
from taperprune.resources import F_of_masks, build_polynomial, grad_F
from taperprune.rho_solver import PruningSiteState
from taperprune.tensor_core import Tape, Tensor, check_gradients, numeric_grad, relative_error
from taperprune.tensor_core import functional as F
from taperprune.tensorio import load_tensors

from acceptance_log import record

SEEDS3 = (0, 1, 2)
SEEDS5 = (0, 1, 2, 3, 4)
MUS = (1e-2, 1e-2 / math.sqrt(10), 1e-3)
TARGET = 0.05  # sweep target, fraction of the unpruned F
WINDOW = 0.04  # relative half-width of the accuracy window
BRANCH_R = 100.0
PREFIX_R = 300.0
PREFIX_END = 0.15


# shared runs ------------------------------------------------------------------


@pytest.fixture(scope="session")
def workdir(tmp_path_factory):
    d = os.environ.get("TAPERPRUNE_ACCEPTANCE_DIR")
    if d:
        Path(d).mkdir(parents=True, exist_ok=True)
        return Path(d)
    return tmp_path_factory.mktemp("acceptance")


def cached_run(cfg: RunConfig, out: Path) -> dict:
    info = out / "run.json"
    if not (info.exists() and json.loads(info.read_text())["fingerprint"] == cfg.fingerprint()):
        run(cfg, out)
    return json.loads(info.read_text())


def final_snapshot(out: Path) -> Path:
    return next((out / "snapshots").glob("final_*.npz"))


class Runs:
    def __init__(self, root: Path):
        self.root = root

    def pretrained(self, seed: int) -> Path:
        out = self.root / f"pretrain_s{seed}"
        cfg = RunConfig(seed=seed, phases=[Phase("pretrain", gates="off", iterations=1500)], eval_interval=500)
        cached_run(cfg, out)
        return out / "weights.npz"

    def to_half_config(self, seed: int) -> RunConfig:
        return RunConfig(
            seed=seed,
            weights=str(self.pretrained(seed)),
            phases=[Phase("prune", F_fraction_below=0.5 * (1 - WINDOW), max_iterations=6000)],
            eval_interval=100,
            eval_dense={"F_fraction": [0.5 * (1 - WINDOW), 0.5 * (1 + WINDOW)], "interval": 5},
        )

    def to_half(self, seed: int) -> Path:
        out = self.root / f"half_s{seed}"
        cached_run(self.to_half_config(seed), out)
        return out

    def prefix(self, seed: int) -> Path:
        out = self.root / f"prefix_s{seed}"
        cfg = RunConfig(
            seed=seed,
            weights=str(self.pretrained(seed)),
            controller={**DESK_CONTROLLER, "schedule": "exponential", "r": PREFIX_R},
            phases=[Phase("prefix", F_fraction_below=PREFIX_END, max_iterations=6000)],
            eval_interval=100,
            eval_samples=1000,
            snapshot_interval=100,
        )
        cached_run(cfg, out)
        return final_snapshot(out)

    def branch_config(self, seed: int, **controller) -> RunConfig:
        return RunConfig(
            seed=seed,
            start_from=str(self.prefix(seed)),
            controller={**DESK_CONTROLLER, "r": BRANCH_R, **controller},
            phases=[Phase("prune", F_fraction_below=0.03, max_iterations=15000)],
            eval_interval=100,
            eval_dense=[
                {"F_fraction": [0.03, PREFIX_END], "interval": 10},
                {"F_fraction": [TARGET * (1 - WINDOW), TARGET * (1 + WINDOW)], "interval": 1},
            ],
        )

    def sweep(self):
        starts = {s: self.prefix(s) for s in SEEDS3}
        return mu_sweep(self.branch_config(0), MUS, self.root / "sweep", seeds=SEEDS3, target_fraction=TARGET,
                        window=WINDOW, start_from=starts, reuse=True)

    def exponential_branch(self, seed: int) -> Path:
        out = self.root / f"exp_branch_s{seed}"
        cached_run(self.branch_config(seed, schedule="exponential", r=PREFIX_R), out)
        return out


@pytest.fixture(scope="session")
def runs(workdir):
    return Runs(workdir)


@pytest.fixture(scope="session")
def sweep_rows(runs):
    return runs.sweep()


# 1. gradients ---------------------------------------------------------------


def _rand(rng, *shape):
    return Tensor(rng.standard_normal(shape), requires_grad=True)


def _probe(rng, out_shape):
    p = Tensor(rng.standard_normal(out_shape))
    return lambda t: F.sum(F.mul(t, p))


def _case_conv(rng):
    stride, pad = int(rng.integers(1, 3)), int(rng.integers(0, 2))
    c, k = int(rng.integers(1, 4)), int(rng.integers(1, 4))
    x, w, b = _rand(rng, 2, c, 5, 5), _rand(rng, k, c, 3, 3), _rand(rng, k)
    ho = (5 + 2 * pad - 3) // stride + 1
    head = _probe(rng, (2, k, ho, ho))
    return lambda t: head(F.conv2d(t[0], t[1], t[2], stride=stride, pad=pad)), [x, w, b]


def _case_dense(rng):
    n, i, o = 3, int(rng.integers(2, 7)), int(rng.integers(2, 6))
    x, w, b = _rand(rng, n, i), _rand(rng, o, i), _rand(rng, o)
    head = _probe(rng, (n, o))
    return lambda t: head(F.dense(t[0], t[1], t[2])), [x, w, b]


def _case_relu(rng):
    x = _rand(rng, 3, 4, 3, 3)
    x.data[np.abs(x.data) < 1e-3] = 0.5  # keep away from the kink
    head = _probe(rng, x.shape)
    return lambda t: head(F.relu(t[0])), [x]


def _case_pool(rng):
    k = int(rng.integers(2, 4))
    x = _rand(rng, 2, 3, 2 * k, 2 * k)
    head = _probe(rng, (2, 3, 2, 2))
    return lambda t: head(F.maxpool2d(t[0], k)), [x]


def _case_ce(rng):
    n, c = int(rng.integers(2, 6)), int(rng.integers(2, 8))
    labels = rng.integers(0, c, n)
    return lambda t: F.softmax_cross_entropy(t[0], labels), [_rand(rng, n, c)]


def _gate_interior_error(rng):
    cfg = GateConfig()
    n, c = 3, 4
    a = Tensor(rng.standard_normal((n, c, 2, 2)), requires_grad=True)
    rho = rng.uniform(-2, 2, c)
    lo, hi = gate_boundaries(rho, cfg)
    x = lo + rng.uniform(0.1, 0.9, (n, c)) * (hi - lo)
    probe = rng.standard_normal(a.shape)

    class Fixed:
        def random(self, shape):
            return x

    with Tape() as tape:
        out, sample = gate_forward(a, rho, cfg, Fixed())
        tape.backward(F.sum(F.mul(out, Tensor(probe))))

    def loss():
        return float(np.sum(probe * a.data * gate_value(rho[None, :], x, cfg)[:, :, None, None]))

    return max(relative_error(a.grad, numeric_grad(loss, a.data)), relative_error(sample.dl0_dx, numeric_grad(loss, x)))


def test_criterion_1_gradient_correctness():
    t0 = time.perf_counter()
    worst = {}
    cases = {"conv": _case_conv, "dense": _case_dense, "relu": _case_relu, "maxpool": _case_pool, "softmax-CE": _case_ce}
    for name, make in cases.items():
        errs = []
        for i in range(20):
            build_fn, inputs = make(np.random.default_rng(1000 + i))
            errs += check_gradients(build_fn, inputs)
        worst[name] = max(errs)
    worst["gate interior"] = max(_gate_interior_error(np.random.default_rng(2000 + i)) for i in range(20))
    elapsed = time.perf_counter() - t0
    ok = all(e < 1e-4 for e in worst.values()) and elapsed < 60
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    record(1, ok, f"worst relative FD error over 20 instances each: {detail}; {elapsed:.1f} s")
    assert ok


# 2. gate limits -------------------------------------------------------------


def test_criterion_2_gate_limits():
    cfg = GateConfig()  # eps 0.5, kappa 0.04
    xs = (np.arange(1_000_000) + 0.5) / 1_000_000
    measure_err = 0.0
    for rho in (-12.0, -4.0, -1.0, 0.0, 0.5, 3.0, 12.0):
        h = gate_value(rho, xs, cfg)
        lo, hi = gate_boundaries(rho, cfg)
        measure_err = max(measure_err, abs(np.mean((h > 0) & (h < 1)) - (hi - lo)))
    lo, hi = gate_boundaries(0.0, cfg)
    gap0 = float(hi - lo)
    gap12 = max(float(np.subtract(*gate_boundaries(r, cfg)[::-1])) for r in (-12.0, 12.0))
    hard = GateConfig(epsilon=0.0)
    z_worst = 0.0
    for i, rho in enumerate((-3.0, -1.0, 0.0, 0.7, 2.5)):
        x = np.random.default_rng(300 + i).random(100_000)
        p = sigmoid(rho)
        z_worst = max(z_worst, abs(gate_value(rho, x, hard).mean() - p) / math.sqrt(p * (1 - p) / x.size))
    checks = {
        "measure": measure_err < 2e-6,
        "rho0": round(gap0, 2) == 0.26,
        "rho12": abs(gap12 - 0.02) <= 1e-6,
        "mc": z_worst < 3,
    }
    record(
        2,
        all(checks.values()),
        f"|measure - gap| {measure_err:.1e}; gap at rho=0 {gap0:.5f}; gap at |rho|=12 {gap12:.10f} "
        f"(target 0.02 +- 1e-6: {'ok' if checks['rho12'] else 'off by %.2e' % (gap12 - 0.02)}); MC retention worst {z_worst:.2f} SE",
    )
    assert all(checks.values()), checks


# 3. resource model ----------------------------------------------------------


def test_criterion_3_resource_model():
    g = build(toy_cnn_spec())
    poly = build_polynomial(g)
    rng = np.random.default_rng(7)
    mismatches = 0
    for _ in range(50):
        masks = {k: rng.random(s.n) < rng.uniform(0.05, 1.0) for k, s in g.sites.items()}
        for m in masks.values():
            m[rng.integers(m.size)] = True
        conf, dense = extract(g, masks)
        mismatches += F_of_masks(poly, masks) != count_macs(build_extracted(conf, dense))
    fd_err = 0.0
    for i in range(10):
        r = np.random.default_rng(50 + i)
        p = {k: r.uniform(0, 1, s.n) for k, s in g.sites.items()}
        analytic = grad_F(poly, p)
        for k in p:
            def f():
                return F_of_masks(poly, p)
            fd_err = max(fd_err, relative_error(analytic[k], numeric_grad(f, p[k], step=1e-3)))
    ok = mismatches == 0 and fd_err < 1e-8
    record(3, ok, f"{50 - mismatches}/50 random masks give F equal to the extracted MAC count; grad_F FD error {fd_err:.1e}")
    assert ok


# 4. constraint tracking -----------------------------------------------------


@pytest.mark.slow
def test_criterion_4_constraint_tracking(runs):
    worst = {}
    for seed in SEEDS5:
        m = read_metrics(runs.to_half(seed))
        F0 = m["F"][0]
        worst[seed] = float(np.max(np.abs(m["F"] - m["F_sched"])[m["iteration"] > 500]) / F0)
        assert m["F"][-1] < 0.5 * F0
    ok = max(worst.values()) < 0.02
    detail = ", ".join(f"seed {s} {100 * e:.2f}%" for s, e in worst.items())
    record(4, ok, f"max |F - F_sched| / F(rho0) after 500 iterations, 100% -> 50%: {detail}")
    assert ok


# 5. schedule laws -----------------------------------------------------------


def test_criterion_5_schedule_laws():
    cfg = ControllerConfig(mu=1e-5, r=300.0, F_0=0.2)
    s = ControllerState(lambda_F=0.0, F_sched=1.0)
    rng = np.random.default_rng(0)
    geo_err = 0.0
    for i in range(1, 2001):
        s.lambda_F = float(rng.uniform(0, 5))  # any lambda_F >= 0
        update_F_sched(s, cfg)
        expected = 0.2 + (1 - 1 / 300) ** i * 0.8
        geo_err = max(geo_err, abs(s.F_sched - expected) / expected)
    cfg = ControllerConfig()  # mu 1e-5, guard 1e-6
    s = ControllerState(lambda_F=-10.0, F_sched=1.0)
    M = 1e-5 / (10 + 1e-6)
    dec_err = 0.0
    for _ in range(1000):
        before = s.F_sched
        s.lambda_F = -10.0
        update_F_sched(s, cfg)
        dec_err = max(dec_err, abs((before - s.F_sched) - M) / np.spacing(before))
    ok = geo_err < 1e-12 and dec_err <= 1 and schedule_step_cap(-10.0, cfg) == M
    record(5, ok, f"geometric decay rel. error {geo_err:.1e} over 2000 steps; capped decrement off by at most {dec_err:.1f} ulp")
    assert ok


# 6. mu sweep ---------------------------------------------------------------


@pytest.mark.slow
def test_criterion_6_mu_sweep_trend(sweep_rows):
    print()
    print(format_table(sweep_rows))
    assert all(r.error is None for r in sweep_rows), [r.error for r in sweep_rows if r.error]
    summary = summarize(sweep_rows)  # largest mu first
    its = [s["iterations_mean"] for s in summary]
    acc = [s["accuracy_mean"] for s in summary]
    ratios = [b / a for a, b in zip(its, its[1:])]
    per_seed = {}
    for seed in SEEDS3:
        rows = sorted((r for r in sweep_rows if r.seed == seed), key=lambda r: -r.mu)
        its_s = [r.iterations_to_target for r in rows]
        per_seed[seed] = [b / a for a, b in zip(its_s, its_s[1:])]
    per_seed_ratio_ok = all(2 <= q <= 5 for qs in per_seed.values() for q in qs)
    ok_its = all(2 <= q <= 5 for q in ratios) and per_seed_ratio_ok
    ok_acc = all(b >= a for a, b in zip(acc, acc[1:]))
    record(
        6,
        ok_its and ok_acc,
        "mu " + " / ".join(f"{s['mu']:.3g}" for s in summary)
        + ": mean iterations " + " / ".join(f"{v:.0f}" for v in its)
        + " (ratios " + ", ".join(f"{q:.2f}" for q in ratios) + "; per seed "
        + "; ".join(f"{s}: " + ", ".join(f"{q:.2f}" for q in qs) for s, qs in per_seed.items())
        + f"; every seed within [2, 5]: {per_seed_ratio_ok})"
        + "; mean window accuracy " + " / ".join(f"{v:.4f}" for v in acc),
    )
    assert ok_its and ok_acc


# 7. schedule shape ----------------------------------------------------------


@pytest.mark.slow
def test_criterion_7_schedule_shape(runs, sweep_rows):
    mu_b = MUS[1]
    parts, ok = [], True
    for seed in SEEDS3:
        out_b = next(r.out for r in sweep_rows if r.seed == seed and r.mu == mu_b)
        a = curve_report(runs.exponential_branch(seed), F_range=(0.03, PREFIX_END))
        b = curve_report(out_b, F_range=(0.03, PREFIX_END))
        ka, kb = a.knee, b.knee
        good = ka is not None and kb is not None and kb.F_knee < ka.F_knee
        ok &= good
        if ka is None or kb is None:
            parts.append(f"seed {seed}: no knee")
            continue
        parts.append(
            f"seed {seed}: exponential knee {ka.F_knee / a.F_initial:.4f} (slopes {ka.slope_above:.3f}/{ka.slope_below:.3f}), "
            f"adaptive knee {kb.F_knee / b.F_initial:.4f} (slopes {kb.slope_above:.3f}/{kb.slope_below:.3f})"
        )
    record(7, ok, "knee of the accuracy curve, fraction of initial F: " + "; ".join(parts))
    assert ok


# 8. repeatability -----------------------------------------------------------


@pytest.mark.slow
def test_criterion_8_repeatability(runs):
    accs = []
    for seed in SEEDS5:
        rep = curve_report(runs.to_half(seed), targets=(0.5,), window=WINDOW, knee_axis=None)
        acc, n = rep.windows[0.5]
        assert n >= 3, f"seed {seed}: only {n} evaluations in the window"
        accs.append(acc)
    sd = float(np.std(accs, ddof=1))
    ok = math.isfinite(sd) and sd < 0.01
    record(8, ok, f"window accuracy at 50% F over 5 seeds: {', '.join(f'{a:.4f}' for a in accs)}; std {100 * sd:.3f}% absolute")
    assert ok


# 9. extraction equivalence --------------------------------------------------


def _graph_at(snapshot: Path):
    tensors, meta = load_tensors(snapshot)
    g = build(GraphSpec.from_dict({**meta["graph"], "init": {"seed": 0}}), "float64")
    g.load_weights({k[8:]: v for k, v in tensors.items() if k.startswith("weights/")})
    for name in g.site_names:
        g.sites[name] = PruningSiteState(name, tensors[f"rho/{name}"].astype(float), tensors[f"D/{name}"].astype(float))
    return g


@pytest.mark.slow
def test_criterion_9_extraction_equivalence(runs, sweep_rows):
    prefix = runs.prefix(0).parent
    late = next(Path(r.out) for r in sweep_rows if r.seed == 0 and r.mu == MUS[1])
    stages = [prefix / f"iter_{i:08d}.npz" for i in (300, 400, 500)] + [runs.prefix(0), final_snapshot(late)]
    rng = np.random.default_rng(9)
    worst, fractions = 0.0, []
    for snap in stages:
        g = _graph_at(snap)
        conf, dense = extract(g)
        small = build_extracted(conf, dense)
        x = rng.standard_normal((100,) + tuple(g.spec.input_shape))
        full, sliced = forward_eval(g, x), forward_eval(small, x)
        worst = max(worst, float(np.max(np.abs(full - sliced)) / np.max(np.abs(full))))
        fractions.append(count_macs(small) / count_macs(g))
    ok = worst <= 1e-6
    record(9, ok, f"5 stages at {', '.join(f'{f:.3f}' for f in fractions)} of full MACs; max relative logit difference {worst:.1e}")
    assert ok


# 10. determinism and resume -------------------------------------------------


@pytest.mark.slow
def test_criterion_10_determinism_and_resume(runs, tmp_path):
    cfg = runs.to_half_config(0).replace(
        phases=[
            Phase("warm", gates="off", iterations=30).__dict__,
            Phase("prune", iterations=150).__dict__,
            Phase("tune", gates="frozen", iterations=40).__dict__,
        ],
        eval_interval=25,
    )
    run(cfg, tmp_path / "a")
    run(cfg, tmp_path / "b")
    part = run(cfg, tmp_path / "part", stop_after=97)
    run(cfg, tmp_path / "resumed", resume=part.configuration)
    a = (tmp_path / "a/metrics.csv").read_bytes()
    same = a == (tmp_path / "b/metrics.csv").read_bytes()
    resumed = a == (tmp_path / "resumed/metrics.csv").read_bytes()
    rows = a.decode().count("\n") - 1
    record(10, same and resumed, f"{rows} metrics rows; repeat run bitwise equal: {same}; resumed at 97 bitwise equal: {resumed}")
    assert same and resumed
