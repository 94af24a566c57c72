"""RMS-normalised clipped solver for the pruning parameters ``rho``.

Kept apart from the weight solvers on purpose: pruning speed depends only on
``alpha_rho`` and the clip bound, never on the weight learning rate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .gate import sigmoid, sigmoid_prime
from .tensor_core import ShapeError


class NonFiniteGradient(FloatingPointError):
    pass


@dataclass(frozen=True)
class RhoSolverConfig:
    alpha_rho: float = 0.03
    delta: float = 1.0 / 200
    rho_max: float = 12.0
    clip: float = 3.0
    d_floor: float = 1e-12

    def __post_init__(self):
        for name in ("delta", "rho_max", "clip", "d_floor"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        # alpha_rho == 0 is accepted: it freezes the gates (schedule-only runs)
        if self.alpha_rho < 0:
            raise ValueError(f"alpha_rho must be non-negative, got {self.alpha_rho}")


@dataclass
class PruningSiteState:
    site: str
    rho: np.ndarray
    D: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=np.float64).copy()
        if self.D is None:
            self.D = np.zeros_like(self.rho)
        self.D = np.asarray(self.D, dtype=np.float64).copy()
        if self.D.shape != self.rho.shape:
            raise ShapeError(f"D accumulator of site {self.site}", self.rho.shape, self.D.shape)

    @classmethod
    def fresh(cls, site: str, n: int, rho_max: float = 12.0) -> "PruningSiteState":
        return cls(site, np.full(n, float(rho_max)))

    @property
    def n(self) -> int:
        return self.rho.shape[0]

    @property
    def p(self) -> np.ndarray:
        return sigmoid(self.rho)

    @property
    def keep(self) -> np.ndarray:
        return self.rho > 0


def chain_rule_to_p(dL_drho, rho):
    """Convert a gradient w.r.t. ``rho`` into one w.r.t. ``p = sigmoid(rho)``."""
    return np.asarray(dL_drho, dtype=np.float64) / sigmoid_prime(rho)


def rho_step(site: PruningSiteState, L0p, gradF_p, lambda_F: float, cfg: RhoSolverConfig) -> PruningSiteState:
    """One synchronous update of every channel of ``site`` (in place).

    ``L0p`` is ``-sum_n dL0/dx`` per channel; the accumulator ``D`` tracks
    its square only, the Lagrangian part enters the step but not ``D``.
    """
    L0p = np.asarray(L0p, dtype=np.float64)
    gradF_p = np.broadcast_to(np.asarray(gradF_p, dtype=np.float64), site.rho.shape)
    if L0p.shape != site.rho.shape:
        raise ShapeError(f"L0p of site {site.site}", site.rho.shape, L0p.shape)
    if not (np.all(np.isfinite(L0p)) and np.all(np.isfinite(gradF_p)) and np.isfinite(lambda_F)):
        bad = np.flatnonzero(~np.isfinite(L0p) | ~np.isfinite(gradF_p))
        raise NonFiniteGradient(
            f"site {site.site}: non-finite pruning gradient (channels {bad[:8].tolist()}, lambda_F={lambda_F})"
        )

    site.D *= 1.0 - cfg.delta
    site.D += cfg.delta * L0p * L0p
    Lp = L0p - lambda_F * gradF_p
    normalized = np.clip(Lp / np.sqrt(site.D + cfg.d_floor), -cfg.clip, cfg.clip)
    site.rho = np.clip(site.rho - cfg.alpha_rho * normalized, -cfg.rho_max, cfg.rho_max)
    return site
