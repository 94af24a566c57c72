"""Weight solvers.  These only ever see network weights, never pruning parameters."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autograd import ShapeError

SOLVER_KINDS = ("sgd", "adam")


@dataclass
class WeightSolverState:
    """Per-parameter moment accumulators plus the solver hyperparameters.

    ``sgd`` keeps one momentum buffer per parameter (Caffe convention,
    ``v <- momentum * v - lr * g``).  ``adam`` keeps first and second moments
    and the step counter for bias correction.
    """

    kind: str = "sgd"
    lr: float = 0.01
    momentum: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in SOLVER_KINDS:
            raise ValueError(f"unknown weight solver {self.kind!r}; expected one of {SOLVER_KINDS}")

    def arrays(self) -> dict[str, np.ndarray]:
        """Flat view of the accumulators for snapshotting."""
        out = {f"m/{k}": a for k, a in self.m.items()}
        out.update({f"v/{k}": a for k, a in self.v.items()})
        return out

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        self.m = {k[2:]: np.array(a) for k, a in arrays.items() if k.startswith("m/")}
        self.v = {k[2:]: np.array(a) for k, a in arrays.items() if k.startswith("v/")}


def weight_solver_step(state: WeightSolverState, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    """Update ``params`` in place with the selected rule and return them.

    Parameters missing from ``grads`` (or with a ``None`` gradient) are left
    untouched.
    """
    state.step += 1
    t = state.step
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        if g.shape != p.shape:
            raise ShapeError(f"gradient of {name}", p.shape, g.shape)
        if state.weight_decay:
            g = g + state.weight_decay * p
        if state.kind == "sgd":
            if state.momentum:
                buf = state.m.setdefault(name, np.zeros_like(p))
                if buf.shape != p.shape:
                    raise ShapeError(f"momentum buffer of {name}", p.shape, buf.shape)
                buf *= state.momentum
                buf -= state.lr * g
                p += buf
            else:
                p -= state.lr * g
        else:
            m = state.m.setdefault(name, np.zeros_like(p))
            v = state.v.setdefault(name, np.zeros_like(p))
            if m.shape != p.shape or v.shape != p.shape:
                raise ShapeError(f"moments of {name}", p.shape, m.shape)
            m *= state.beta1
            m += (1 - state.beta1) * g
            v *= state.beta2
            v += (1 - state.beta2) * g * g
            mhat = m / (1 - state.beta1**t)
            vhat = v / (1 - state.beta2**t)
            p -= state.lr * mhat / (np.sqrt(vhat) + state.eps)
    return params
