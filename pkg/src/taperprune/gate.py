"""Learnable channel-wise dropout.

A channel with pruning parameter ``rho`` is kept with probability
``sigmoid(rho)``.  For a uniform draw ``x`` the scaling factor is

* ``h = 1`` for ``x <= x_lo``,
* ``h = (x_hi - x) / (x_hi - x_lo)`` inside the gap,
* ``h = 0`` for ``x >= x_hi``,

with ``x_lo = (1 - eps*kappa) * sigmoid(rho - eps)`` and
``x_hi = eps*kappa + (1 - eps*kappa) * sigmoid(rho + eps)``.

Orientation note: the interpolator is taken *decreasing* in ``x`` so that
``eps = 0`` collapses to the indicator ``[x < sigmoid(rho)]`` and ``h`` is
Bernoulli(``sigmoid(rho)``).  Writing the interpolator increasing in ``x``
would keep a channel with probability ``1 - sigmoid(rho)`` instead.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor_core import ShapeError, Tensor, record


def sigmoid(t):
    t = np.asarray(t, dtype=np.float64)
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out if out.ndim else float(out)


def sigmoid_prime(t):
    s = sigmoid(t)
    return s * (1.0 - s)


@dataclass(frozen=True)
class GateConfig:
    epsilon: float = 0.5
    kappa: float = 0.04
    rho_max: float = 12.0

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError(f"epsilon must lie in [0, 1], got {self.epsilon}")
        if not 0.0 < self.kappa < 1.0:
            raise ValueError(f"kappa must lie in (0, 1), got {self.kappa}")
        if self.rho_max <= 0:
            raise ValueError(f"rho_max must be positive, got {self.rho_max}")


@dataclass
class GateSample:
    """Noise and factors of one gate for one forward pass.

    ``dl0_dx`` is filled in by the backward pass: ``dL0/dx[n, c]``.
    """

    x: np.ndarray
    h: np.ndarray
    x_lo: np.ndarray
    x_hi: np.ndarray
    dl0_dx: np.ndarray | None = None

    def fractional(self) -> np.ndarray:
        return (self.x > self.x_lo) & (self.x < self.x_hi)

    def L0p(self) -> np.ndarray:
        """Per-channel ``-sum_n dL0/dx``; zeros before backward has run."""
        if self.dl0_dx is None:
            return np.zeros(self.x.shape[1])
        return -self.dl0_dx.sum(axis=0)


def gate_boundaries(rho, cfg: GateConfig):
    """Lower and upper edge of the fractional band in ``x``."""
    ek = cfg.epsilon * cfg.kappa
    x_lo = (1.0 - ek) * sigmoid(np.asarray(rho, dtype=np.float64) - cfg.epsilon)
    x_hi = ek + (1.0 - ek) * sigmoid(np.asarray(rho, dtype=np.float64) + cfg.epsilon)
    return x_lo, x_hi


def _h_from_bounds(x, x_lo, x_hi):
    x = np.asarray(x, dtype=np.float64)
    gap = x_hi - x_lo
    safe = np.where(gap > 0, gap, 1.0)
    h = np.where(x >= x_hi, 0.0, np.where(x <= x_lo, 1.0, (x_hi - x) / safe))
    return h


def gate_value(rho, x, cfg: GateConfig):
    x_lo, x_hi = gate_boundaries(rho, cfg)
    h = _h_from_bounds(x, x_lo, x_hi)
    return h if np.ndim(h) else float(h)


def gate_dh_dx(rho, x, cfg: GateConfig):
    """``dh/dx``: ``-1/(x_hi - x_lo)`` strictly inside the gap, 0 elsewhere."""
    x_lo, x_hi = gate_boundaries(rho, cfg)
    return _dh_dx_from_bounds(np.asarray(x, dtype=np.float64), x_lo, x_hi)


def _dh_dx_from_bounds(x, x_lo, x_hi):
    gap = x_hi - x_lo
    inside = (x > x_lo) & (x < x_hi)
    return np.where(inside, -1.0 / np.where(gap > 0, gap, 1.0), 0.0)


def gate_backward(upstream: np.ndarray, sample: GateSample, activations: np.ndarray):
    """Gradient to the activations and ``dL0/dx`` per (sample, channel)."""
    if upstream.shape != activations.shape or upstream.shape[:2] != sample.h.shape:
        raise ShapeError("gate backward operands", activations.shape, upstream.shape)
    extra = (1,) * (activations.ndim - 2)
    grad_act = upstream * sample.h.reshape(sample.h.shape + extra).astype(upstream.dtype, copy=False)
    dh_dx = _dh_dx_from_bounds(sample.x, sample.x_lo[None, :], sample.x_hi[None, :])
    axes = tuple(range(2, activations.ndim))
    dl_dh = (upstream * activations).sum(axis=axes) if axes else upstream * activations
    return grad_act, dl_dh * dh_dx


def gate_forward(activations: Tensor, rho: np.ndarray, cfg: GateConfig, rng: np.random.Generator):
    """Scale each (sample, channel) slab by a freshly sampled ``h``."""
    n, c = activations.shape[:2]
    rho = np.asarray(rho, dtype=np.float64)
    if rho.shape != (c,):
        raise ShapeError("gate channel count", rho.shape[0] if rho.ndim else rho.shape, c)
    x = rng.random((n, c))
    x_lo, x_hi = gate_boundaries(rho, cfg)
    h = _h_from_bounds(x, x_lo[None, :], x_hi[None, :])
    sample = GateSample(x=x, h=h, x_lo=x_lo, x_hi=x_hi)

    extra = (1,) * (activations.data.ndim - 2)
    out = Tensor.wrap(activations.data * h.reshape(h.shape + extra).astype(activations.dtype, copy=False))

    def backward(g):
        grad_act, dl0_dx = gate_backward(g, sample, activations.data)
        sample.dl0_dx = dl0_dx
        return (grad_act,)

    record("gate", (activations,), out, backward)
    return out, sample
