"""Evaluation metrics: R^2, RMSE, MAE, and the RMSE/MAE dispersion ratio.

The ratio is a residual-shape diagnostic: purely Gaussian residuals give
sqrt(pi/2) ~ 1.253, and larger values flag outliers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MetricsError, ShapeError


@dataclass(frozen=True)
class MetricsReport:
    r2: float
    rmse: float
    mae: float
    rmse_mae_ratio: float | None   # None when MAE is exactly zero
    n_points: int
    scope: str = "per-function"


def compute_metrics(pred, truth, scope: str = "per-function") -> MetricsReport:
    """Score predictions against truth over one vector of points.

    R^2 uses the truth mean of this vector for the total sum of squares, so a
    per-function call scores against that function's own variability.
    """
    pred = np.asarray(pred, dtype=np.float64).ravel()
    truth = np.asarray(truth, dtype=np.float64).ravel()
    if pred.shape != truth.shape:
        raise ShapeError(f"length mismatch: pred {pred.shape} vs truth {truth.shape}")
    n = len(truth)
    if n < 2:
        raise MetricsError(f"need at least 2 points, got {n}")
    residual = pred - truth
    ss_res = float((residual * residual).sum())
    centered = truth - truth.mean()
    ss_tot = float((centered * centered).sum())
    if ss_tot == 0.0:
        raise MetricsError("truth values are all identical; R^2 is undefined")
    rmse = float(np.sqrt(ss_res / n))
    mae = float(np.abs(residual).mean())
    ratio = rmse / mae if mae > 0.0 else None
    return MetricsReport(r2=1.0 - ss_res / ss_tot, rmse=rmse, mae=mae,
                         rmse_mae_ratio=ratio, n_points=n, scope=scope)


def aggregate_metric(reports, name: str):
    """Mean and sample std of one metric over per-function reports.

    Undefined ratios (None) are skipped; returns (nan, nan) if nothing is
    left.
    """
    vals = [getattr(r, name) for r in reports]
    vals = np.array([v for v in vals if v is not None], dtype=np.float64)
    if len(vals) == 0:
        return float("nan"), float("nan")
    std = float(vals.std(ddof=1)) if len(vals) > 1 else 0.0
    return float(vals.mean()), std
