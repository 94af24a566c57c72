"""Closed-loop controller testbed without a network.

One site of ``n`` channels; ``F = scale * G * w`` (linear) and
``L0 = sum_c a_c (2 - p_c)^2``, so the data-loss pressure on ``p_c`` is
``dL0/dp_c = -2 a_c (2 - p_c)``, with multiplicative noise.  The minimum lies
outside ``[0, 1]`` so the pressure never vanishes, like the gate estimator
whose ``1/gap`` factor keeps ``|L0p|`` finite at saturated ``rho``.
"""

import numpy as np

from taperprune.controller import ControllerConfig, compute_K, init_schedule, update_F_sched, update_lambda
from taperprune.resources import F_of_sites, ResourcePolynomial, Segment, grad_F, probabilities
from taperprune.rho_solver import PruningSiteState, RhoSolverConfig, rho_step


def run_testbed(
    iterations=3000,
    n=64,
    scale=1.0,
    ctrl=None,
    rho_cfg=RhoSolverConfig(),
    noise=0.3,
    seed=0,
):
    ctrl = ctrl or ControllerConfig(mu=1e-3, r=1500.0)
    rng = np.random.default_rng(seed)
    a = rng.uniform(0.05, 1.0, n)
    poly = ResourcePolynomial([Segment("s", 0, n)], {}, {0: 1000.0 * scale}, 0.0, {"s": n})
    sites = {"s": PruningSiteState.fresh("s", n, rho_cfg.rho_max)}
    state = init_schedule(poly, sites)
    F0 = state.F_sched
    hist = {"F": [F0], "F_sched": [state.F_sched], "lambda": [0.0], "w": [1.0]}
    for _ in range(iterations):
        p = sites["s"].p
        L0p = 2 * a * (2 - p) * (1 + noise * rng.standard_normal(n))
        # L0p is -dL0/dp in the solver's convention (negative keeps channels);
        L0p = -L0p
        F_now = F_of_sites(poly, sites)
        K = compute_K(sites, poly, rho_cfg)
        lam = update_lambda(state, F_now, K, ctrl)
        gF = grad_F(poly, probabilities(sites))
        rho_step(sites["s"], L0p, gF["s"], lam, rho_cfg)
        update_F_sched(state, ctrl)
        hist["F"].append(F_of_sites(poly, sites))
        hist["F_sched"].append(state.F_sched)
        hist["lambda"].append(lam)
        hist["w"].append(float(np.mean(sites["s"].p)))
    return {k: np.array(v) for k, v in hist.items()}, F0
