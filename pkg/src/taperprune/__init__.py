"""Channel-wise CNN pruning under a tapering resource budget.

Per-channel retention probabilities ``sigmoid(rho)`` drive stochastic gates
inserted into the network.  A proportional controller sets a Lagrange
multiplier so that the expected multiply count tracks a shrinking budget,
and a dedicated RMS-normalised solver moves ``rho`` independently of the
weight solver.
"""

from .controller import (
    ControllerConfig,
    ControllerFault,
    ControllerState,
    compute_K,
    init_schedule,
    update_F_sched,
    update_lambda,
)
from .gate import GateConfig, GateSample, gate_backward, gate_boundaries, gate_forward, gate_value, sigmoid
from .graph import (
    DisconnectedError,
    GraphSpec,
    GraphSpecError,
    InstrumentedGraph,
    PrunedConfiguration,
    build,
    build_extracted,
    count_macs,
    extract,
    forward_eval,
    forward_train,
)
from .resources import ResourcePolynomial, build_polynomial, eval_F, grad_F, segment_fractions, site_fractions
from .rho_solver import PruningSiteState, RhoSolverConfig, chain_rule_to_p, rho_step

__version__ = "0.1.0"

__all__ = [
    "ControllerConfig",
    "ControllerFault",
    "ControllerState",
    "DisconnectedError",
    "GateConfig",
    "GateSample",
    "GraphSpec",
    "GraphSpecError",
    "InstrumentedGraph",
    "PrunedConfiguration",
    "PruningSiteState",
    "ResourcePolynomial",
    "RhoSolverConfig",
    "build",
    "build_extracted",
    "build_polynomial",
    "chain_rule_to_p",
    "compute_K",
    "count_macs",
    "eval_F",
    "extract",
    "forward_eval",
    "forward_train",
    "gate_backward",
    "gate_boundaries",
    "gate_forward",
    "gate_value",
    "grad_F",
    "init_schedule",
    "rho_step",
    "segment_fractions",
    "sigmoid",
    "site_fractions",
    "update_F_sched",
    "update_lambda",
]
