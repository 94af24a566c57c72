"""Budget schedule and Lagrange multiplier control.

Per iteration the training loop calls, in order: :func:`compute_K`,
:func:`update_lambda` (with ``F(rho^i)`` and ``F_sched(i)``), the rho step
with the new multiplier, then :func:`update_F_sched`.

``lambda_F`` is in loss per resource unit, so ``mu`` (a loss scale) does not
depend on the resource unit; it does depend on the loss scale and must be
retuned for a different loss.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .resources import F_of_sites, ResourcePolynomial, grad_F, probabilities
from .rho_solver import RhoSolverConfig

SCHEDULE_KINDS = ("adaptive", "feedback", "exponential")


class ControllerFault(FloatingPointError):
    pass


@dataclass(frozen=True)
class ControllerConfig:
    mu: float = 1e-5
    beta: float = 0.05
    r: float = 30000.0
    F_0: float = 0.0
    lambda_guard: float = 1e-6
    schedule: str = "adaptive"

    def __post_init__(self):
        if self.mu <= 0 or self.beta <= 0 or self.r <= 0:
            raise ValueError(f"mu, beta and r must be positive (got {self.mu}, {self.beta}, {self.r})")
        if self.F_0 < 0:
            raise ValueError(f"F_0 must be non-negative, got {self.F_0}")
        if self.schedule not in SCHEDULE_KINDS:
            raise ValueError(f"unknown schedule {self.schedule!r}; expected one of {SCHEDULE_KINDS}")


@dataclass
class ControllerState:
    lambda_F: float
    F_sched: float
    iteration: int = 0
    K: float = float("nan")

    def as_dict(self) -> dict:
        return {"lambda_F": self.lambda_F, "F_sched": self.F_sched, "iteration": self.iteration, "K": self.K}


def init_schedule(poly: ResourcePolynomial, sites) -> ControllerState:
    return ControllerState(lambda_F=0.0, F_sched=F_of_sites(poly, sites))


def compute_K(sites, poly: ResourcePolynomial, cfg: RhoSolverConfig, direction: int = 0) -> float:
    """Sensitivity of ``F`` to ``lambda_F`` through one unclipped rho step.

    ``direction`` is the sign of the coming rho push (-1 when over budget).
    When it is non-zero, channels already pinned at the rho bound in that
    direction are left out: the clip holds them, so they cannot respond.
    Without this, channels that never see data gradient (``D == 0``, e.g.
    dead ReLUs) keep a ``1/sqrt(d_floor)`` weight after they are pruned and
    inflate ``K`` by orders of magnitude.  If every channel is pinned the
    plain sum is returned.
    """
    gF = grad_F(poly, probabilities(sites))
    K = K_pinned = 0.0
    for name, st in sites.items():
        p = st.p
        terms = gF[name] ** 2 * p * (1.0 - p) * cfg.alpha_rho / np.sqrt(st.D + cfg.d_floor)
        K += float(np.sum(terms))
        if direction:
            K_pinned += float(np.sum(terms[direction * st.rho >= cfg.rho_max]))
    free = K - K_pinned
    return free if free > 0 else K


def update_lambda(state: ControllerState, F_current: float, K: float, cfg: ControllerConfig) -> float:
    """Proportional feedback; replaces ``lambda_F`` rather than accumulating it."""
    if not (math.isfinite(K) and K > 0):
        raise ControllerFault(f"iteration {state.iteration}: sensitivity K={K!r} must be positive and finite")
    if not math.isfinite(F_current):
        raise ControllerFault(f"iteration {state.iteration}: resource F={F_current!r} is not finite")
    state.K = K
    state.lambda_F = -cfg.beta * (F_current - state.F_sched) / K
    return state.lambda_F


def schedule_step_cap(lambda_F: float, cfg: ControllerConfig) -> float:
    """``M``: the largest schedule decrement allowed under quality pressure."""
    if lambda_F < 0:
        return cfg.mu / (abs(lambda_F) + cfg.lambda_guard)
    return math.inf


def update_F_sched(state: ControllerState, cfg: ControllerConfig) -> float:
    decay = (state.F_sched - cfg.F_0) / cfg.r
    if cfg.schedule == "exponential":
        step = decay
    elif cfg.schedule == "adaptive":
        M = schedule_step_cap(state.lambda_F, cfg)
        step = min(max(decay, -M), M)
    else:
        step = cfg.mu / (abs(state.lambda_F) + cfg.lambda_guard)
        step = min(step, max(state.F_sched - cfg.F_0, 0.0))
    state.F_sched = state.F_sched - step
    state.iteration += 1
    return state.F_sched
