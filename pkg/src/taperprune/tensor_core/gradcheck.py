"""Central finite-difference checks for tape-recorded functions."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .autograd import Tape, Tensor


def numeric_grad(f: Callable[[], float], arr: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central differences of the scalar ``f()`` w.r.t. every entry of ``arr`` (perturbed in place)."""
    g = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = arr[idx]
        arr[idx] = orig + step
        fp = f()
        arr[idx] = orig - step
        fm = f()
        arr[idx] = orig
        g[idx] = (fp - fm) / (2 * step)
    return g


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """max |a-b| / max(|a|, |b|, tiny), a scale-aware relative error."""
    denom = max(np.abs(a).max(initial=0.0), np.abs(b).max(initial=0.0), 1e-12)
    return float(np.abs(a - b).max(initial=0.0) / denom)


def check_gradients(build: Callable[[Sequence[Tensor]], Tensor], inputs: Sequence[Tensor], step: float = 1e-5) -> list[float]:
    """Compare tape gradients of ``build(inputs)`` against finite differences.

    ``build`` must return a scalar tensor.  Returns one relative error per
    input that requires a gradient.
    """
    with Tape() as tape:
        loss = build(inputs)
        tape.backward(loss)
    analytic = [t.grad.copy() if t.grad is not None else np.zeros_like(t.data) for t in inputs]

    def f():
        return float(build(inputs).data)

    errors = []
    for t, ga in zip(inputs, analytic):
        if not t.requires_grad:
            continue
        gn = numeric_grad(f, t.data, step)
        errors.append(relative_error(ga, gn))
    return errors
