"""Run configuration (JSON).

A run is a list of phases executed in order.  Each phase says how the gates
behave (``train``: stochastic gates with rho learning and the controller;
``frozen``: deterministic keep masks, weights only; ``off``: gates bypassed,
e.g. pretraining) and when it stops.  Optional per-phase overrides change
the weight learning rate or controller settings from that phase on.
"""

from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from ..controller import ControllerConfig
from ..gate import GateConfig
from ..graph import GraphSpec
from ..rho_solver import RhoSolverConfig
from ..tensor_core.solvers import WeightSolverState
from .models import grouped_cnn_spec, toy_cnn_spec

GATE_MODES = ("train", "frozen", "off")
BUILTIN_GRAPHS = {"toy_cnn": toy_cnn_spec, "grouped_cnn": grouped_cnn_spec}

# desk-scale controller defaults.  F is counted in MACs, so the multiplier
# guard of 1e-6 per GMAC is rewritten per MAC; r is sized for runs
# of a few thousand iterations
DESK_CONTROLLER = {"mu": 3e-4, "r": 1500.0, "lambda_guard": 1e-15}
# channels that never see a data gradient (dead ReLUs) have D == 0; a floor
# near 1% of a live channel's RMS keeps them from dominating K
DESK_RHO = {"d_floor": 1e-4}


class ConfigError(ValueError):
    pass


@dataclass
class Phase:
    name: str = "prune"
    gates: str = "train"
    iterations: int | None = None
    F_fraction_below: float | None = None
    F_below: float | None = None
    max_iterations: int | None = None
    lr: float | None = None
    controller: dict = field(default_factory=dict)
    rho: dict = field(default_factory=dict)
    F_0_fraction: float | None = None
    freeze_schedule: bool = False

    def validate(self) -> None:
        if self.gates not in GATE_MODES:
            raise ConfigError(f"phase {self.name!r}: gates must be one of {GATE_MODES}, got {self.gates!r}")
        stops = [self.iterations, self.F_fraction_below, self.F_below]
        if all(s is None for s in stops):
            raise ConfigError(f"phase {self.name!r} has no stop condition")
        if self.iterations is not None and self.iterations < 0:
            raise ConfigError(f"phase {self.name!r}: iterations must be >= 0")
        if self.gates != "train" and (self.F_fraction_below is not None or self.F_below is not None):
            raise ConfigError(f"phase {self.name!r}: an F stop condition needs gates='train'")
        unknown = set(self.controller) - {f.name for f in dataclasses.fields(ControllerConfig)}
        unknown |= set(self.rho) - {f.name for f in dataclasses.fields(RhoSolverConfig)}
        if unknown:
            raise ConfigError(f"phase {self.name!r}: unknown override(s) {sorted(unknown)}")


@dataclass
class RunConfig:
    graph: dict | str = field(default_factory=lambda: {"builtin": "toy_cnn"})
    dataset: dict = field(default_factory=lambda: {"kind": "synthetic"})
    seed: int = 0
    batch_size: int = 32
    dtype: str = "float32"
    weights: str | None = None
    start_from: str | None = None
    solver: dict = field(default_factory=lambda: {"kind": "sgd", "lr": 0.003, "momentum": 0.9, "weight_decay": 5e-4})
    gate: dict = field(default_factory=dict)
    rho: dict = field(default_factory=lambda: dict(DESK_RHO))
    controller: dict = field(default_factory=lambda: dict(DESK_CONTROLLER))
    resource: str = "macs"
    phases: list[Phase] = field(default_factory=lambda: [Phase(F_fraction_below=0.5, max_iterations=20000)])
    eval_interval: int = 200
    eval_samples: int | None = None
    eval_dense: dict | list | None = None
    snapshot_interval: int = 0

    def __post_init__(self):
        self.phases = [p if isinstance(p, Phase) else Phase(**p) for p in self.phases]
        self.validate()

    def validate(self) -> None:
        if self.eval_interval <= 0:
            raise ConfigError(f"eval_interval must be positive, got {self.eval_interval}")
        if self.batch_size <= 0:
            raise ConfigError(f"batch_size must be positive, got {self.batch_size}")
        if self.snapshot_interval < 0:
            raise ConfigError("snapshot_interval must be >= 0")
        if not self.phases:
            raise ConfigError("a run needs at least one phase")
        if self.weights and self.start_from:
            raise ConfigError("set either weights or start_from, not both")
        for band in self.eval_bands():
            lo, hi = band.get("F_fraction", (None, None))
            if lo is None or hi is None or not 0 <= lo < hi or int(band.get("interval", 1)) <= 0:
                raise ConfigError(f"eval_dense bands need F_fraction [lo, hi] with 0 <= lo < hi and a positive interval, got {band}")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"dtype must be float32 or float64, got {self.dtype!r}")
        for p in self.phases:
            p.validate()
        # constructing the configs validates their values
        self.gate_config()
        self.rho_config()
        self.controller_config()
        WeightSolverState(**self.solver)

    def eval_bands(self) -> list[dict]:
        """``eval_dense`` as a list of ``{"F_fraction": [lo, hi], "interval": k}`` bands."""
        if not self.eval_dense:
            return []
        return [self.eval_dense] if isinstance(self.eval_dense, dict) else list(self.eval_dense)

    # typed views -----------------------------------------------------------

    def gate_config(self) -> GateConfig:
        return GateConfig(**self.gate)

    def rho_config(self, phase: Phase | None = None) -> RhoSolverConfig:
        return RhoSolverConfig(**{**self.rho, **(phase.rho if phase else {})})

    def controller_config(self, phase: Phase | None = None, **extra) -> ControllerConfig:
        return ControllerConfig(**{**self.controller, **(phase.controller if phase else {}), **extra})

    def graph_spec(self, base: Path | None = None) -> GraphSpec:
        """The graph spec.  Without a weights file, initialisation is keyed by the run seed."""
        if isinstance(self.graph, str):
            path = Path(self.graph)
            if base is not None and not path.is_absolute():
                path = base / path
            spec = GraphSpec.load(path)
        elif "builtin" in self.graph:
            kw = {k: v for k, v in self.graph.items() if k != "builtin"}
            if "widths" in kw:
                kw["widths"] = tuple(kw["widths"])
            try:
                spec = BUILTIN_GRAPHS[self.graph["builtin"]](**kw)
            except KeyError:
                raise ConfigError(f"unknown builtin graph {self.graph['builtin']!r}; have {sorted(BUILTIN_GRAPHS)}") from None
        else:
            spec = GraphSpec.from_dict(self.graph)
        if self.weights:
            w = Path(self.weights)
            spec.init = {**spec.init, "weights": str(w if w.is_absolute() or base is None else base / w)}
        if not spec.init.get("weights"):
            spec.init = {**spec.init, "seed": self.seed}
        return spec

    # serialisation ---------------------------------------------------------

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config key(s) {sorted(unknown)}")
        return cls(**copy.deepcopy(d))

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path) as f:
            return cls.from_dict(json.load(f))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    def replace(self, **changes) -> "RunConfig":
        d = self.to_dict()
        d.update(copy.deepcopy(changes))
        return RunConfig.from_dict(d)

    def fingerprint(self) -> str:
        """Hash of everything that affects the trajectory."""
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]
