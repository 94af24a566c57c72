"""FLOPs-accuracy curves from a metrics file."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .run import read_metrics


@dataclass
class KneeFit:
    """Continuous two-segment fit of accuracy against ``F`` (or ``log F``).

    ``slope_above`` applies for ``F >= F_knee``, ``slope_below`` under it;
    slopes are per unit of the fitted axis.
    """

    F_knee: float
    slope_above: float
    slope_below: float
    sse: float
    axis: str


@dataclass
class CurveReport:
    F: np.ndarray
    accuracy: np.ndarray
    iteration: np.ndarray
    F_initial: float
    windows: dict[float, tuple[float, int]] = field(default_factory=dict)
    knee: KneeFit | None = None

    def export_csv(self, path) -> Path:
        path = Path(path)
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["F", "F_fraction", "accuracy", "iteration"])
            for F, a, i in zip(self.F, self.accuracy, self.iteration):
                w.writerow([repr(float(F)), repr(float(F / self.F_initial)), repr(float(a)), int(i)])
        return path

    def summary(self) -> str:
        lines = [f"{len(self.F)} points, F from {self.F.max():.6g} to {self.F.min():.6g} (initial {self.F_initial:.6g})"]
        for t, (acc, n) in sorted(self.windows.items(), reverse=True):
            lines.append(f"  window around {t:.4g} of initial F: accuracy {acc:.4f} over {n} evaluations")
        if self.knee:
            k = self.knee
            lines.append(
                f"  knee at F = {k.F_knee:.6g} ({k.F_knee / self.F_initial:.4f} of initial); "
                f"slope {k.slope_above:.4g} above, {k.slope_below:.4g} below ({k.axis} axis)"
            )
        return "\n".join(lines)


def window_accuracy(F_fraction, accuracy, target: float, window: float = 0.04) -> tuple[float, int]:
    """Mean accuracy over evaluations with ``F`` within ``target * (1 +- window)``.

    Rows without an evaluation (NaN accuracy) are ignored.
    """
    F_fraction = np.asarray(F_fraction, dtype=float)
    accuracy = np.asarray(accuracy, dtype=float)
    sel = (F_fraction >= target * (1 - window)) & (F_fraction <= target * (1 + window)) & ~np.isnan(accuracy)
    n = int(sel.sum())
    return (float(np.mean(accuracy[sel])) if n else float("nan")), n


def smoothed_peak(F, accuracy, width: int = 5) -> float:
    """``F`` at the maximum of the running mean (over ``width`` points in descending ``F``)."""
    F = np.asarray(F, dtype=float)
    order = np.argsort(-F, kind="stable")
    y = np.asarray(accuracy, dtype=float)[order]
    width = max(1, min(width, len(y)))
    run = np.convolve(y, np.ones(width) / width, mode="valid")
    return float(F[order][int(np.argmax(run)) + width // 2])


def fit_knee(F, accuracy, axis: str = "log", min_side: int = 3, after_peak: bool = True) -> KneeFit | None:
    """Least-squares hinge ``a + b (x - x_k) + c max(0, x_k - x)`` over candidate ``x_k``.

    Candidates are the observed ``x`` values leaving at least ``min_side``
    points on each side.  With ``after_peak`` only points at or below the
    smoothed accuracy peak are fitted, so a recovery at the start of a
    slower schedule is not mistaken for the knee.  Returns None when there
    are too few points.
    """
    F = np.asarray(F, dtype=float)
    y = np.asarray(accuracy, dtype=float)
    if axis not in ("log", "linear"):
        raise ValueError(f"axis must be 'log' or 'linear', got {axis!r}")
    if after_peak and len(F):
        keep = F <= smoothed_peak(F, y)
        F, y = F[keep], y[keep]
    x = np.log(F) if axis == "log" else F
    xs = np.unique(x)
    best = None
    for xk in xs:
        if np.sum(x < xk) < min_side or np.sum(x > xk) < min_side:
            continue
        A = np.column_stack([np.ones_like(x), x - xk, np.maximum(0.0, xk - x)])
        coef, *_ = np.linalg.lstsq(A, y, rcond=None)
        sse = float(np.sum((A @ coef - y) ** 2))
        if best is None or sse < best[0]:
            best = (sse, xk, coef)
    if best is None:
        return None
    sse, xk, (_, b, c) = best
    return KneeFit(float(np.exp(xk) if axis == "log" else xk), float(b), float(b - c), sse, axis)


def curve_report(
    metrics,
    *,
    phases: list[str] | None = None,
    targets: tuple[float, ...] = (),
    window: float = 0.04,
    knee_axis: str | None = "log",
    F_range: tuple[float, float] | None = None,
    F_initial: float | None = None,
) -> CurveReport:
    """Evaluated ``(F, accuracy)`` pairs sorted by descending ``F``.

    ``phases`` restricts the points to rows of those phases, ``F_range``
    (fractions of the initial ``F``) to a band of the curve.  ``targets``
    are fractions of the initial ``F`` for window-averaged accuracy.  The
    initial ``F`` comes from ``run.json`` next to the metrics when present
    (a branched run starts below it), else from the first row.
    """
    if isinstance(metrics, dict):
        m = metrics
    else:
        path = Path(metrics)
        m = read_metrics(path)
        info = (path if path.is_dir() else path.parent) / "run.json"
        if F_initial is None and info.exists():
            F_initial = json.loads(info.read_text())["F_initial"]
    if len(m["iteration"]) == 0:
        raise ValueError("metrics file has no rows")
    F_initial = float(m["F"][0]) if F_initial is None else float(F_initial)
    sel = ~np.isnan(m["accuracy"])
    if phases is not None:
        sel &= np.isin(m["phase"], list(phases))
    if F_range is not None:
        frac = m["F"] / F_initial
        sel &= (frac >= F_range[0]) & (frac <= F_range[1])
    if not sel.any():
        raise ValueError("no evaluated rows match")
    F, acc, it = m["F"][sel], m["accuracy"][sel], m["iteration"][sel]
    order = np.argsort(-F, kind="stable")
    rep = CurveReport(F[order], acc[order], it[order], F_initial)
    for t in targets:
        rep.windows[t] = window_accuracy(rep.F / F_initial, rep.accuracy, t, window)
    if knee_axis:
        rep.knee = fit_knee(rep.F, rep.accuracy, knee_axis)
    return rep
