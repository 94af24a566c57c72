"""Minimal dense tensors, reverse-mode tape, CNN layers and weight solvers."""

from . import functional
from .autograd import DTYPES, ShapeError, Tape, TapeNode, Tensor, UsageError, active_tape, no_tape, record
from .gradcheck import check_gradients, numeric_grad, relative_error
from .solvers import SOLVER_KINDS, WeightSolverState, weight_solver_step

__all__ = [
    "DTYPES",
    "SOLVER_KINDS",
    "ShapeError",
    "Tape",
    "TapeNode",
    "Tensor",
    "UsageError",
    "WeightSolverState",
    "active_tape",
    "check_gradients",
    "functional",
    "no_tape",
    "numeric_grad",
    "record",
    "relative_error",
    "weight_solver_step",
]
