"""The prune / fine-tune loop.

Per iteration ``t`` (state ``W^t, rho^t``): forward and backward on a
minibatch with stochastic gates; weight step; ``K`` and the new
``lambda_F`` from ``F(rho^t)``; rho step with that multiplier; schedule
step.  Row ``t + 1`` of ``metrics.csv`` then records ``F(rho^{t+1})``,
``F_sched(t + 1)``, the multiplier and ``K`` used in the step and the
minibatch loss; ``accuracy`` is filled on evaluation rows only.

All randomness is keyed by ``(seed, stream, iteration, ...)``, so a run
resumed from a snapshot at row ``k`` writes exactly the rows the
uninterrupted run would have written.  Wall-clock time, which is never
reproducible, lives in ``timing.csv`` instead.
"""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import __version__
from ..controller import ControllerFault, ControllerState, compute_K, init_schedule, update_F_sched, update_lambda
from ..graph import DisconnectedError, InstrumentedGraph, build, build_extracted, extract, forward_eval
from ..resources import F_of_sites, build_polynomial, grad_F, probabilities
from ..rho_solver import PruningSiteState, rho_step
from ..rng import minibatch_indices
from ..tensor_core import Tape
from ..tensor_core import functional as F
from ..tensor_core.solvers import WeightSolverState, weight_solver_step
from ..tensorio import load_tensors, save_tensors
from . import data as datamod
from .config import ConfigError, Phase, RunConfig

log = logging.getLogger(__name__)

METRICS_VERSION = 1
COLUMNS = ("iteration", "phase", "F", "F_sched", "lambda_F", "K", "train_loss", "accuracy")
SNAPSHOT_KIND = "taperprune-snapshot"


class RunAborted(RuntimeError):
    def __init__(self, msg: str, snapshot: Path | None):
        super().__init__(f"{msg}; state saved to {snapshot}" if snapshot else msg)
        self.snapshot = snapshot


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer, str)):
        return str(v)
    return repr(float(v))


@dataclass
class RunResult:
    out: Path
    iterations: int
    F_initial: float
    F_final: float
    stop_reasons: list[str] = field(default_factory=list)
    configuration: object = None


class Runner:
    """Mutable state of one run.  Use :func:`run` unless you need to step by hand."""

    def __init__(self, config: RunConfig, out, base: Path | None = None, dataset: datamod.Dataset | None = None):
        self.config = config
        self.out = Path(out)
        self.spec = config.graph_spec(base)
        self.graph: InstrumentedGraph = build(self.spec, config.dtype)
        self.poly = build_polynomial(self.graph, config.resource)
        self.data = (dataset or datamod.load(config.dataset)).astype(config.dtype)
        if self.data.input_shape != tuple(self.spec.input_shape):
            raise ConfigError(f"dataset images are {self.data.input_shape}, graph expects {tuple(self.spec.input_shape)}")
        n_val = config.eval_samples or len(self.data.y_val)
        self.x_val, self.y_val = self.data.x_val[:n_val], self.data.y_val[:n_val]
        self.gate_cfg = config.gate_config()
        self.solver = WeightSolverState(**config.solver)
        self.ctrl = init_schedule(self.poly, self.graph.sites)
        self.F_initial = self.ctrl.F_sched
        self.iteration = 0
        self.phase_index = 0
        self.phase_start = 0
        self.phase_F0: dict[int, float] = {}
        self.stop_reasons: list[str] = []
        self.metrics_text = ",".join(COLUMNS) + "\n"
        self._pending: list[str] = []
        self._timing: list[str] = []
        self._t0 = time.perf_counter()

    # helpers -----------------------------------------------------------------

    @property
    def phase(self) -> Phase:
        return self.config.phases[self.phase_index]

    def F_now(self) -> float:
        return F_of_sites(self.poly, self.graph.sites)

    def accuracy(self) -> float:
        """Validation accuracy of the pruned network.

        The extracted dense network computes the same function as the masked
        one (the acceptance suite checks this) and is much cheaper once most
        channels are gone.
        """
        net = self.graph
        if self.graph.site_names:
            try:
                net = build_extracted(*extract(self.graph), dtype=self.config.dtype)
            except DisconnectedError:
                pass
        logits = forward_eval(net, self.x_val)
        return float(np.mean(np.argmax(logits, axis=1) == self.y_val))

    def _controller_config(self, phase: Phase):
        if phase.freeze_schedule:
            F_0 = self.phase_F0.setdefault(self.phase_index, self.ctrl.F_sched)
            return self.config.controller_config(phase, F_0=F_0)
        if phase.F_0_fraction is not None:
            return self.config.controller_config(phase, F_0=phase.F_0_fraction * self.F_initial)
        return self.config.controller_config(phase)

    def _lr(self) -> float:
        lr = self.config.solver.get("lr", WeightSolverState.lr)
        for p in self.config.phases[: self.phase_index + 1]:
            if p.lr is not None:
                lr = p.lr
        return lr

    def _row(self, phase: str, lam, K, loss, acc) -> None:
        vals = (self.iteration, phase, self.F_now(), self.ctrl.F_sched, lam, K, loss, acc)
        self._pending.append(",".join(_fmt(v) for v in vals) + "\n")

    def _flush(self) -> None:
        if not self._pending:
            return
        block = "".join(self._pending)
        self.metrics_text += block
        with open(self.out / "metrics.csv", "a") as f:
            f.write(block)
        self._pending.clear()
        with open(self.out / "timing.csv", "a") as f:
            f.write(f"{self.iteration},{time.perf_counter() - self._t0:.3f}\n")

    # phases ------------------------------------------------------------------

    def _phase_done(self, done: int) -> str | None:
        p = self.phase
        if p.iterations is not None and done >= p.iterations:
            return "iterations"
        F = self.F_now()
        if p.F_fraction_below is not None and F < p.F_fraction_below * self.F_initial:
            return "F_fraction_below"
        if p.F_below is not None and F < p.F_below:
            return "F_below"
        if p.max_iterations is not None and done >= p.max_iterations:
            return "max_iterations"
        return None

    # one iteration -------------------------------------------------------------

    def step(self) -> None:
        phase = self.phase
        g, t, cfg = self.graph, self.iteration, self.config
        idx = minibatch_indices(cfg.seed, t, len(self.data.y_train), cfg.batch_size)
        x, y = self.data.x_train[idx], self.data.y_train[idx]
        mode = {"train": "train", "frozen": "eval", "off": "off"}[phase.gates]
        with Tape() as tape:
            logits, samples = g.forward(x, mode, iteration=t, seed=cfg.seed, gate_cfg=self.gate_cfg)
            loss = F.softmax_cross_entropy(logits, y)
            tape.backward(loss)
        loss_value = float(loss.data)
        if not math.isfinite(loss_value):
            raise self._abort(f"non-finite training loss at iteration {t}")

        lam, K = None, None
        if phase.gates == "train":
            rho_cfg = cfg.rho_config(phase)
            ctrl_cfg = self._controller_config(phase)
            L0p = g.site_L0p(samples)
            F_t = self.F_now()
            try:
                if rho_cfg.alpha_rho > 0:
                    push = int(np.sign(self.ctrl.F_sched - F_t))
                    K = compute_K(g.sites, self.poly, rho_cfg, direction=push)
                    lam = update_lambda(self.ctrl, F_t, K, ctrl_cfg)
                else:
                    # frozen gates: K is identically zero and nothing can track
                    self.ctrl.lambda_F = lam = 0.0
                gF = grad_F(self.poly, probabilities(g.sites))
                new_sites = {}
                for name, site in g.sites.items():
                    s = PruningSiteState(name, site.rho.copy(), site.D.copy())
                    new_sites[name] = rho_step(s, L0p[name], gF[name], lam, rho_cfg)
            except FloatingPointError as e:
                raise self._abort(f"iteration {t}: {e}") from e

        self.solver.lr = self._lr()
        weight_solver_step(self.solver, g.weight_arrays(), {k: p.grad for k, p in g.params.items()})
        if phase.gates == "train":
            g.sites.update(new_sites)
            update_F_sched(self.ctrl, ctrl_cfg)
        self.iteration = t + 1
        self.ctrl.iteration = self.iteration
        if K is not None:
            self.ctrl.K = K

        acc = self.accuracy() if self._eval_due() else None
        self._row(phase.name, lam, K, loss_value, acc)
        if acc is not None:
            self._flush()

    def _eval_due(self) -> bool:
        """On the interval, on the last row of every phase, and densely inside ``eval_dense``."""
        cfg = self.config
        if self.iteration % cfg.eval_interval == 0:
            return True
        if self._phase_done(self.iteration - self.phase_start) is not None:
            return True
        frac = None
        for band in cfg.eval_bands():
            lo, hi = band["F_fraction"]
            if self.iteration % int(band.get("interval", 1)) == 0:
                frac = self.F_now() / self.F_initial if frac is None else frac
                if lo <= frac <= hi:
                    return True
        return False

    # driving -------------------------------------------------------------------

    def start(self, base: Path | None = None) -> None:
        if self.config.start_from:
            # branch off another run: its state, this run's phases and metrics
            path = Path(self.config.start_from)
            self._load_state(*_read_snapshot(path if path.is_absolute() or base is None else base / path))
            self.phase_start = self.iteration
        self.out.mkdir(parents=True, exist_ok=True)
        (self.out / "metrics.csv").write_text(self.metrics_text)
        (self.out / "timing.csv").write_text("iteration,wall_seconds\n")
        self._row("init", self.ctrl.lambda_F, None, None, self.accuracy())
        self._flush()

    def advance(self, stop_after: int | None = None) -> bool:
        """Run phases until the run ends (True) or ``stop_after`` rows exist (False)."""
        cfg = self.config
        while self.phase_index < len(cfg.phases):
            reason = self._phase_done(self.iteration - self.phase_start)
            if reason is not None:
                self.stop_reasons.append(f"{self.phase.name}:{reason}@{self.iteration}")
                log.info("phase %s stopped (%s) at iteration %d", self.phase.name, reason, self.iteration)
                self._flush()
                self.phase_index += 1
                self.phase_start = self.iteration
                continue
            if stop_after is not None and self.iteration >= stop_after:
                self._flush()
                return False
            self.step()
            if cfg.snapshot_interval and self.iteration % cfg.snapshot_interval == 0:
                self._flush()
                self.snapshot()
        self._flush()
        return True

    def _abort(self, msg: str) -> RunAborted:
        self._flush()
        path = self.snapshot(tag="abort")
        log.error("%s", msg)
        return RunAborted(msg, path)

    # snapshots -------------------------------------------------------------------

    def snapshot(self, tag: str | None = None) -> Path:
        d = self.out / "snapshots"
        d.mkdir(parents=True, exist_ok=True)
        path = d / f"{tag or 'iter'}_{self.iteration:08d}.npz"
        tensors = {f"weights/{k}": v for k, v in self.graph.weight_arrays().items()}
        tensors.update({f"solver/{k}": v for k, v in self.solver.arrays().items()})
        for name, s in self.graph.sites.items():
            tensors[f"rho/{name}"] = s.rho
            tensors[f"D/{name}"] = s.D
        tensors["metrics_csv"] = np.frombuffer((self.metrics_text + "".join(self._pending)).encode(), dtype=np.uint8)
        meta = {
            "kind": SNAPSHOT_KIND,
            "version": __version__,
            "fingerprint": self.config.fingerprint(),
            "config": self.config.to_dict(),
            "graph": self.spec.to_dict(),
            "iteration": self.iteration,
            "phase_index": self.phase_index,
            "phase_start": self.phase_start,
            "phase_F0": {str(k): v for k, v in self.phase_F0.items()},
            "F_initial": self.F_initial,
            "stop_reasons": self.stop_reasons,
            "controller": self.ctrl.as_dict(),
            "solver": {"step": self.solver.step, "lr": self.solver.lr},
        }
        return save_tensors(path, tensors, meta)

    def _load_state(self, tensors: dict, meta: dict) -> None:
        """Weights, solver, gates and controller from a snapshot."""
        if meta["graph"]["layers"] != self.spec.layers or meta["graph"]["sites"] != self.spec.sites:
            raise ConfigError("snapshot was taken on a different graph")
        self.graph.load_weights({k[8:]: v for k, v in tensors.items() if k.startswith("weights/")})
        self.solver.load_arrays({k[7:]: v for k, v in tensors.items() if k.startswith("solver/")})
        self.solver.step = int(meta["solver"]["step"])
        for name in self.graph.site_names:
            self.graph.sites[name] = PruningSiteState(name, np.array(tensors[f"rho/{name}"]), np.array(tensors[f"D/{name}"]))
        c = meta["controller"]
        self.ctrl = ControllerState(c["lambda_F"], c["F_sched"], c["iteration"], c["K"])
        self.iteration = int(meta["iteration"])
        self.F_initial = float(meta["F_initial"])

    def restore(self, path) -> None:
        """Continue this configuration from one of its own snapshots."""
        tensors, meta = _read_snapshot(path)
        if meta["fingerprint"] != self.config.fingerprint():
            raise ConfigError(f"{path} was written by a different configuration (fingerprint {meta['fingerprint']})")
        self._load_state(tensors, meta)
        self.phase_index = int(meta["phase_index"])
        self.phase_start = int(meta["phase_start"])
        self.phase_F0 = {int(k): v for k, v in meta["phase_F0"].items()}
        self.stop_reasons = list(meta["stop_reasons"])
        self.metrics_text = tensors["metrics_csv"].tobytes().decode()
        self.out.mkdir(parents=True, exist_ok=True)
        (self.out / "metrics.csv").write_text(self.metrics_text)
        (self.out / "timing.csv").write_text("iteration,wall_seconds\n")

    def finish(self) -> RunResult:
        self.snapshot(tag="final")
        self.graph.save_weights(self.out / "weights.npz")
        info = {
            "version": __version__,
            "metrics_version": METRICS_VERSION,
            "columns": list(COLUMNS),
            "fingerprint": self.config.fingerprint(),
            "config": self.config.to_dict(),
            "iterations": self.iteration,
            "F_initial": self.F_initial,
            "F_final": self.F_now(),
            "stop_reasons": self.stop_reasons,
        }
        (self.out / "run.json").write_text(json.dumps(info, indent=2) + "\n")
        conf = None
        if self.graph.site_names:
            conf, dense = extract(self.graph)
            dense.init = {"weights": "pruned_weights.npz"}
            save_tensors(self.out / "pruned_weights.npz", conf.weights, {"masks": {k: v.tolist() for k, v in conf.masks.items()}})
            dense.save(self.out / "pruned_graph.json")
        return RunResult(self.out, self.iteration, self.F_initial, self.F_now(), list(self.stop_reasons), conf)


def run(
    config: RunConfig,
    out,
    *,
    resume=None,
    stop_after: int | None = None,
    base: Path | None = None,
    dataset: datamod.Dataset | None = None,
) -> RunResult:
    """Execute ``config`` into directory ``out``.

    ``resume`` continues from a snapshot written by the same configuration.
    ``stop_after`` interrupts the run once that many iterations are done
    (writing a snapshot there) without running the end-of-run steps.
    """
    r = Runner(config, out, base=base, dataset=dataset)
    if resume is not None:
        r.restore(resume)
    else:
        r.start(base)
    finished = r.advance(stop_after)
    if not finished:
        path = r.snapshot()
        return RunResult(r.out, r.iteration, r.F_initial, r.F_now(), list(r.stop_reasons), path)
    return r.finish()


def _read_snapshot(path):
    tensors, meta = load_tensors(path)
    if meta.get("kind") != SNAPSHOT_KIND:
        raise ConfigError(f"{path} is not a run snapshot")
    return tensors, meta


def read_metrics(path) -> dict[str, np.ndarray]:
    """Columns of a metrics CSV as arrays; empty cells become NaN."""
    path = Path(path)
    if path.is_dir():
        path = path / "metrics.csv"
    lines = path.read_text().splitlines()
    if not lines or lines[0].split(",") != list(COLUMNS):
        raise ValueError(f"{path}: not a metrics file (header {lines[:1]})")
    rows = [ln.split(",") for ln in lines[1:] if ln]
    cols = {}
    for j, name in enumerate(COLUMNS):
        vals = [r[j] for r in rows]
        if name == "phase":
            cols[name] = np.array(vals, dtype=object)
        elif name == "iteration":
            cols[name] = np.array([int(v) for v in vals], dtype=np.int64)
        else:
            cols[name] = np.array([float(v) if v else np.nan for v in vals])
    return cols
