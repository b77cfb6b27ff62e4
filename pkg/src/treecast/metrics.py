"""Forecast accuracy metrics and the pairwise predictive-accuracy test.

Conventions:

* ``pearson`` returns ``nan`` (not 0) when either series has zero variance;
  callers treat ``nan`` as "undefined, flagged" and exclude it from averages.
* ``distance_correlation`` returns 0 when either distance variance is 0.
* All of these are pure functions of their array arguments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def _as_1d(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    return arr


def rmse(actual, predicted) -> float:
    """Root mean squared error of two equal-length sequences."""
    a = _as_1d(actual, "actual")
    p = _as_1d(predicted, "predicted")
    if len(a) != len(p):
        raise ValueError(f"length mismatch: {len(a)} actuals vs {len(p)} predictions")
    if len(a) == 0:
        raise ValueError("rmse of empty sequences is undefined")
    return float(np.sqrt(np.mean((a - p) ** 2)))


def relative_rmse(model_rmse: float, reference_rmse: float) -> float:
    """Ratio of a model's RMSE to the reference model's RMSE.

    Returns ``nan`` when the reference RMSE is zero (flagged as undefined).
    """
    if reference_rmse == 0.0:
        return float("nan")
    return float(model_rmse / reference_rmse)


def pearson(x, y) -> float:
    """Pearson correlation coefficient; ``nan`` if either input is constant."""
    a = _as_1d(x, "x")
    b = _as_1d(y, "y")
    if len(a) != len(b):
        raise ValueError(f"length mismatch: {len(a)} vs {len(b)}")
    if len(a) < 2:
        raise ValueError("pearson needs at least 2 observations")
    a = a - a.mean()
    b = b - b.mean()
    denom = math.sqrt(float(a @ a) * float(b @ b))
    if denom == 0.0:
        return float("nan")
    return float((a @ b) / denom)


def distance_correlation(x, y) -> float:
    """Distance correlation from doubly-centered pairwise distance matrices.

    Uses the biased (divide by n^2) V-statistic convention. Returns 0 when
    either distance variance vanishes (e.g. a constant series).
    """
    a = _as_1d(x, "x")
    b = _as_1d(y, "y")
    if len(a) != len(b):
        raise ValueError(f"length mismatch: {len(a)} vs {len(b)}")
    n = len(a)
    if n < 2:
        raise ValueError("distance_correlation needs at least 2 observations")

    def centered(v: np.ndarray) -> np.ndarray:
        d = np.abs(v[:, None] - v[None, :])
        return d - d.mean(axis=0)[None, :] - d.mean(axis=1)[:, None] + d.mean()

    ca = centered(a)
    cb = centered(b)
    dcov2 = float((ca * cb).mean())
    dvar_x = math.sqrt(max(float((ca * ca).mean()), 0.0))
    dvar_y = math.sqrt(max(float((cb * cb).mean()), 0.0))
    if dvar_x == 0.0 or dvar_y == 0.0:
        return 0.0
    return float(math.sqrt(max(dcov2, 0.0)) / math.sqrt(dvar_x * dvar_y))


@dataclass(frozen=True)
class DmResult:
    statistic: float
    p_value: float


# Long-run variances below this are treated as numerically zero.
_DM_VARIANCE_FLOOR = 1e-12


def diebold_mariano(errors_a, errors_b, horizon: int = 0) -> DmResult:
    """Test of equal predictive accuracy on a squared-loss differential.

    The loss differential is ``d_t = e_a[t]^2 - e_b[t]^2``. The statistic is
    ``mean(d) / sqrt(LRV / n)`` where the long-run variance uses a rectangular
    window over autocovariance lags ``0..horizon``. Two-sided p-value from the
    standard normal. Identical error series report (0, 1).
    """
    ea = _as_1d(errors_a, "errors_a")
    eb = _as_1d(errors_b, "errors_b")
    if len(ea) != len(eb):
        raise ValueError(f"length mismatch: {len(ea)} vs {len(eb)}")
    n = len(ea)
    if n < 10:
        raise ValueError(f"diebold_mariano needs at least 10 observations, got {n}")
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")

    d = ea**2 - eb**2
    if np.max(np.abs(d)) == 0.0:
        return DmResult(0.0, 1.0)
    d_bar = float(d.mean())
    c = d - d_bar
    lrv = float(c @ c) / n
    for lag in range(1, min(horizon, n - 1) + 1):
        lrv += 2.0 * float(c[:-lag] @ c[lag:]) / n
    lrv = max(lrv, _DM_VARIANCE_FLOOR)
    stat = d_bar / math.sqrt(lrv / n)
    p = math.erfc(abs(stat) / math.sqrt(2.0))
    return DmResult(float(stat), float(p))
