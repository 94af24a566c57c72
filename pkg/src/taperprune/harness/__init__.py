"""Experiment orchestration: configs, data, the pruning loop, sweeps and reports."""

from .config import DESK_CONTROLLER, DESK_RHO, ConfigError, Phase, RunConfig
from .data import Dataset, synthetic
from .report import CurveReport, KneeFit, curve_report, fit_knee, window_accuracy
from .run import COLUMNS, METRICS_VERSION, RunAborted, Runner, RunResult, read_metrics, run
from .sweep import SweepRow, format_table, iterations_to_target, mu_sweep, summarize

__all__ = [
    "COLUMNS", "ConfigError", "CurveReport", "DESK_CONTROLLER", "DESK_RHO", "Dataset", "KneeFit",
    "METRICS_VERSION", "Phase", "RunAborted", "RunConfig", "RunResult", "Runner", "SweepRow",
    "curve_report", "fit_knee", "format_table", "iterations_to_target", "mu_sweep", "read_metrics",
    "run", "summarize", "synthetic", "window_accuracy",
]
