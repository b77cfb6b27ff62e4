"""Reference forecasters behind one estimator contract.

Every model here follows the scikit-learn convention: hyper-parameters go to
``__init__`` unchanged, ``fit`` returns ``self`` and stores learned state in
trailing-underscore attributes, and predicting before fitting raises
``NotFittedError``. On top of ``predict_next`` each forecaster exposes
``path(window, horizon)``: the recursive multi-step forecast in which every
prediction is appended to the history and fed back (horizon 0 = next month).

The linear family (AR, Phillips, VAR, AR-in-gap, LSTAR) is fitted by ordinary
least squares through one QR-based solver with a flagged ridge fallback on
rank-deficient designs.
"""

from __future__ import annotations

import csv
import logging
import math
import zlib
from dataclasses import dataclass, replace

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from . import cells, hrnn, panel, training
from .errors import DataError
from .months import format_month, parse_month

logger = logging.getLogger(__name__)

RIDGE_PENALTY = 1e-6


def ols_fit(X: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, bool]:
    """Least squares by QR; rank-deficient designs fall back to ridge.

    Returns (coefficients, used_ridge_fallback).
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != len(y):
        raise ValueError(f"bad design shapes {X.shape} / {y.shape}")
    q, r = np.linalg.qr(X)
    diag = np.abs(np.diag(r))
    tol = max(X.shape) * np.finfo(float).eps * (diag.max() if len(diag) else 0.0)
    if len(diag) == 0 or diag.min() <= tol:
        gram = X.T @ X + RIDGE_PENALTY * np.eye(X.shape[1])
        beta = np.linalg.solve(gram, X.T @ y)
        return beta, True
    beta = np.linalg.solve(r, q.T @ y)
    return beta, False


def _rate_runs(data) -> list[np.ndarray]:
    """Contiguous rate runs of a RateSeries, or a plain array as one run."""
    if isinstance(data, panel.RateSeries):
        return [data.rates[r] for r in data.runs()]
    arr = np.asarray(data, dtype=float)
    if arr.ndim != 1:
        raise ValueError("rates must be one-dimensional")
    return [arr]


def _lagged_design(runs: list[np.ndarray], rho: int) -> tuple[np.ndarray, np.ndarray]:
    """Rows [1, x_{t-1}, ..., x_{t-rho}] -> target x_t, never spanning a gap."""
    rows, targets = [], []
    for run in runs:
        for t in range(rho, len(run)):
            rows.append(np.concatenate(([1.0], run[t - rho:t][::-1])))
            targets.append(run[t])
    if not rows:
        return np.empty((0, rho + 1)), np.empty(0)
    return np.array(rows), np.array(targets)


@dataclass(frozen=True)
class SeriesWindow:
    """What a forecaster is shown when predicting one (node, month).

    ``history`` holds consecutive actual rates immediately preceding the
    target month; ``start_pos`` is the 0-based index of ``history[0]`` within
    the node's full rate series (LSTAR's clock); ``target_month`` is the
    month of the horizon-0 target.
    """

    node: int
    history: np.ndarray
    start_pos: int
    target_month: int


class BaseForecaster(BaseEstimator):
    """Common predict contract; subclasses implement fit and predict_next."""

    @property
    def min_history(self) -> int:
        return self.rho

    def _check_fitted(self, attr: str) -> None:
        if getattr(self, attr, None) is None:
            raise NotFittedError(f"{type(self).__name__} is not fitted yet")

    def predict_next(self, history: np.ndarray, position: int | None = None,
                     month: int | None = None) -> float:
        raise NotImplementedError

    def path(self, window: SeriesWindow, horizon: int) -> np.ndarray:
        hist = list(window.history)
        preds = []
        for j in range(horizon + 1):
            yhat = self.predict_next(
                np.asarray(hist, dtype=float),
                position=window.start_pos + len(hist),
                month=window.target_month + j,
            )
            preds.append(float(yhat))
            hist.append(float(yhat))
        return np.array(preds)


# --------------------------------------------------------------------------
# Autoregressive family
# --------------------------------------------------------------------------


class ArForecaster(BaseForecaster):
    """AR(rho): x_t = a0 + sum_i a_i x_{t-i}, fitted by least squares."""

    def __init__(self, rho: int = 1):
        self.rho = rho

    def fit(self, rates):
        X, y = _lagged_design(_rate_runs(rates), self.rho)
        if len(y) < 5:
            raise DataError(f"AR({self.rho}) needs at least {self.rho + 5} rates, "
                            f"got {len(y)} usable rows")
        self.coef_, self.ridge_fallback_ = ols_fit(X, y)
        return self

    def predict_next(self, history, position=None, month=None) -> float:
        self._check_fitted("coef_")
        if len(history) < self.rho:
            raise ValueError(f"need {self.rho} rates of history, got {len(history)}")
        lags = np.asarray(history, dtype=float)[-self.rho:][::-1]
        return float(self.coef_[0] + self.coef_[1:] @ lags)

    def to_state(self) -> dict:
        return {"rho": self.rho, "coef": [float(c) for c in self.coef_],
                "ridge_fallback": bool(self.ridge_fallback_)}

    @classmethod
    def from_state(cls, state: dict) -> "ArForecaster":
        obj = cls(rho=int(state["rho"]))
        obj.coef_ = np.asarray(state["coef"], dtype=float)
        obj.ridge_fallback_ = bool(state["ridge_fallback"])
        return obj


@dataclass(frozen=True)
class ExogSeries:
    """A monthly exogenous series (e.g. the unemployment rate)."""

    months: np.ndarray
    values: np.ndarray

    def at(self, month: int) -> float:
        idx = np.searchsorted(self.months, month)
        if idx >= len(self.months) or self.months[idx] != month:
            raise DataError(f"no exogenous value for month {format_month(month)}")
        return float(self.values[idx])

    def at_or_before(self, month: int) -> float:
        idx = np.searchsorted(self.months, month, side="right") - 1
        if idx < 0:
            raise DataError(f"no exogenous value at or before {format_month(month)}")
        return float(self.values[idx])


def load_exog(path) -> ExogSeries:
    """Read the `month,unemployment_rate` CSV."""
    months, values = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["month", "unemployment_rate"]:
            raise DataError(f"bad exogenous header {header!r}, "
                            "expected month,unemployment_rate")
        for line_no, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and row[0].strip() == ""):
                continue
            if len(row) != 2:
                raise DataError(f"exog line {line_no}: expected 2 fields, got {len(row)}")
            months.append(parse_month(row[0]))
            values.append(float(row[1]))
    order = np.argsort(months)
    m = np.asarray(months, dtype=int)[order]
    if len(np.unique(m)) != len(m):
        raise DataError("duplicate months in exogenous series")
    return ExogSeries(m, np.asarray(values, dtype=float)[order])


class PhillipsForecaster(BaseForecaster):
    """AR(rho) augmented with the lagged unemployment rate."""

    def __init__(self, rho: int = 4):
        self.rho = rho

    def fit(self, rates: panel.RateSeries, exog: ExogSeries):
        rows, targets = [], []
        for run in rates.runs():
            months = rates.months[run]
            values = rates.rates[run]
            for t in range(self.rho, len(values)):
                u = exog.at(int(months[t]) - 1)  # DataError names the month if missing
                rows.append(np.concatenate(([1.0], values[t - self.rho:t][::-1], [u])))
                targets.append(values[t])
        if len(targets) < 5:
            raise DataError(f"Phillips({self.rho}) has only {len(targets)} usable rows")
        self.coef_, self.ridge_fallback_ = ols_fit(np.array(rows), np.array(targets))
        self.exog_ = exog
        return self

    def bind_exog(self, exog: ExogSeries) -> None:
        self.exog_ = exog

    def predict_next(self, history, position=None, month=None) -> float:
        raise NotImplementedError("use path(); the exogenous input is resolved per window")

    def path(self, window: SeriesWindow, horizon: int) -> np.ndarray:
        self._check_fitted("coef_")
        # Future unemployment is unknown at forecast time: freeze it at the
        # last value observed before the first target month.
        u = self.exog_.at_or_before(window.target_month - 1)
        hist = list(window.history)
        preds = []
        for _ in range(horizon + 1):
            lags = np.asarray(hist[-self.rho:], dtype=float)[::-1]
            yhat = float(self.coef_[0] + self.coef_[1:-1] @ lags + self.coef_[-1] * u)
            preds.append(yhat)
            hist.append(yhat)
        return np.array(preds)

    def to_state(self) -> dict:
        return {"rho": self.rho, "coef": [float(c) for c in self.coef_],
                "ridge_fallback": bool(self.ridge_fallback_)}

    @classmethod
    def from_state(cls, state: dict) -> "PhillipsForecaster":
        obj = cls(rho=int(state["rho"]))
        obj.coef_ = np.asarray(state["coef"], dtype=float)
        obj.ridge_fallback_ = bool(state["ridge_fallback"])
        obj.exog_ = None
        return obj


class VarForecaster(BaseForecaster):
    """VAR(rho) over a node and its sibling group, per-equation least squares."""

    def __init__(self, rho: int = 1):
        self.rho = rho

    def fit(self, group: list[tuple[int, np.ndarray, np.ndarray]], target: int):
        """``group`` is a list of (node_id, months, rates); target must be in it."""
        if len(group) < 2:
            raise DataError("VAR needs at least 2 aligned series")
        ids = [g[0] for g in group]
        if target not in ids:
            raise ValueError(f"target {target} not in group {ids}")
        lookups = [dict(zip(map(int, m), map(float, v))) for _, m, v in group]
        common = sorted(set.intersection(*(set(lu) for lu in lookups)))
        rows, targets = [], []
        for m in common:
            lagged = [m - i for i in range(self.rho, 0, -1)]
            if all(lm in lookups[0] and all(lm in lu for lu in lookups) for lm in lagged):
                vec = [1.0]
                for i in range(1, self.rho + 1):
                    vec.extend(lu[m - i] for lu in lookups)
                rows.append(vec)
                targets.append([lu[m] for lu in lookups])
        if len(rows) < self.rho + 5:
            raise DataError(
                f"VAR alignment failure: only {len(rows)} common windows across {ids}"
            )
        X = np.array(rows)
        Y = np.array(targets)
        coef = np.empty((len(ids), X.shape[1]))
        used_ridge = False
        for j in range(len(ids)):
            coef[j], ridge = ols_fit(X, Y[:, j])
            used_ridge = used_ridge or ridge
        self.group_ = list(ids)
        self.coef_ = coef
        self.ridge_fallback_ = used_ridge
        self.series_ = None
        return self

    def bind(self, series: dict[int, panel.RateSeries]) -> None:
        """Attach the actual rate series used to resolve inputs at predict time."""
        self.series_ = {
            n: dict(zip(map(int, rs.months), map(float, rs.rates)))
            for n, rs in series.items()
            if n in self.group_
        }

    def predict_next(self, history, position=None, month=None) -> float:
        raise NotImplementedError("use path(); VAR resolves the whole group per window")

    def path(self, window: SeriesWindow, horizon: int) -> np.ndarray | None:
        self._check_fitted("coef_")
        if self.series_ is None:
            raise NotFittedError("VarForecaster has no bound series; call bind()")
        lags: list[np.ndarray] = []  # lags[-1] is X_{t-1}
        for i in range(self.rho, 0, -1):
            m = window.target_month - i
            try:
                lags.append(np.array([self.series_[n][m] for n in self.group_]))
            except KeyError:
                return None  # a sibling is missing this month; skip the pair
        k = len(self.group_)
        target_idx = self.group_.index(window.node)
        preds = []
        for _ in range(horizon + 1):
            vec = np.concatenate([[1.0]] + [lags[-i] for i in range(1, self.rho + 1)])
            x_hat = self.coef_ @ vec
            preds.append(float(x_hat[target_idx]))
            lags.append(x_hat)
        return np.array(preds)

    def to_state(self) -> dict:
        return {"rho": self.rho, "group": self.group_,
                "coef": [[float(c) for c in row] for row in self.coef_],
                "ridge_fallback": bool(self.ridge_fallback_)}

    @classmethod
    def from_state(cls, state: dict) -> "VarForecaster":
        obj = cls(rho=int(state["rho"]))
        obj.group_ = [int(n) for n in state["group"]]
        obj.coef_ = np.asarray(state["coef"], dtype=float)
        obj.ridge_fallback_ = bool(state["ridge_fallback"])
        obj.series_ = None
        return obj


class RwForecaster(BaseForecaster):
    """Random-walk style predictor: the mean of the last rho rates."""

    def __init__(self, rho: int = 4):
        self.rho = rho

    def fit(self, rates=None):
        self.fitted_ = True
        return self

    def predict_next(self, history, position=None, month=None) -> float:
        self._check_fitted("fitted_")
        if len(history) < self.rho:
            raise ValueError(f"need {self.rho} rates of history, got {len(history)}")
        return float(np.mean(np.asarray(history, dtype=float)[-self.rho:]))

    def to_state(self) -> dict:
        return {"rho": self.rho}

    @classmethod
    def from_state(cls, state: dict) -> "RwForecaster":
        obj = cls(rho=int(state["rho"]))
        obj.fitted_ = True
        return obj


class ArGapForecaster(BaseForecaster):
    """AR on the gap between the rate and its trailing-mean trend.

    The trend is the mean of the previous rho rates; the gap AR is refitted
    nowhere at predict time, only the trend is recomputed from the most
    recent actuals (or fed-back predictions at longer horizons).
    """

    def __init__(self, rho: int = 4):
        self.rho = rho

    @property
    def min_history(self) -> int:
        return 2 * self.rho

    def _gaps(self, run: np.ndarray) -> np.ndarray:
        # gap_t = x_t - mean(x_{t-rho..t-1}), defined from position rho on
        out = np.empty(len(run) - self.rho)
        for t in range(self.rho, len(run)):
            out[t - self.rho] = run[t] - np.mean(run[t - self.rho:t])
        return out

    def fit(self, rates):
        runs = _rate_runs(rates)
        gap_runs = [self._gaps(r) for r in runs if len(r) > self.rho]
        X, y = _lagged_design(gap_runs, self.rho)
        if len(y) < 5:
            raise DataError(f"AR-gap({self.rho}) needs at least {2 * self.rho + 5} rates")
        self.coef_, self.ridge_fallback_ = ols_fit(X, y)
        return self

    def predict_next(self, history, position=None, month=None) -> float:
        self._check_fitted("coef_")
        h = np.asarray(history, dtype=float)
        if len(h) < 2 * self.rho:
            raise ValueError(f"need {2 * self.rho} rates of history, got {len(h)}")
        gaps = self._gaps(h[-2 * self.rho:])
        trend = float(np.mean(h[-self.rho:]))
        gap_hat = float(self.coef_[0] + self.coef_[1:] @ gaps[::-1])
        return gap_hat + trend

    def to_state(self) -> dict:
        return {"rho": self.rho, "coef": [float(c) for c in self.coef_],
                "ridge_fallback": bool(self.ridge_fallback_)}

    @classmethod
    def from_state(cls, state: dict) -> "ArGapForecaster":
        obj = cls(rho=int(state["rho"]))
        obj.coef_ = np.asarray(state["coef"], dtype=float)
        obj.ridge_fallback_ = bool(state["ridge_fallback"])
        return obj


class LstarForecaster(BaseForecaster):
    """Two AR(rho) regimes blended by a logistic transition in time.

    The transition clock is the 1-based observation position scaled to years
    (position / 12), so the default c = 2 places the midpoint two years into
    the sample. c and gamma are fixed hyper-parameters; only the 2(rho+1)
    linear coefficients are estimated.
    """

    def __init__(self, rho: int = 4, c: float = 2.0, gamma: float = 0.3):
        self.rho = rho
        self.c = c
        self.gamma = gamma

    def _transition(self, position: int) -> float:
        t_years = (position + 1) / 12.0
        return float(cells.sigmoid(self.gamma * (t_years - self.c)))

    def fit(self, rates):
        if isinstance(rates, panel.RateSeries):
            runs = [rates.rates[r] for r in rates.runs()]
        else:
            runs = [np.asarray(rates, dtype=float)]
        rows, targets = [], []
        position = 0
        for run in runs:
            for t in range(len(run)):
                if t >= self.rho:
                    base = np.concatenate(([1.0], run[t - self.rho:t][::-1]))
                    f = self._transition(position)
                    rows.append(np.concatenate(((1.0 - f) * base, f * base)))
                    targets.append(run[t])
                position += 1
        if len(targets) < 5:
            raise DataError(f"LSTAR({self.rho}) needs at least {2 * (self.rho + 1) + 5} rates")
        coef, self.ridge_fallback_ = ols_fit(np.array(rows), np.array(targets))
        self.coef_low_ = coef[:self.rho + 1]
        self.coef_high_ = coef[self.rho + 1:]
        return self

    def predict_next(self, history, position=None, month=None) -> float:
        self._check_fitted("coef_low_")
        if position is None:
            position = len(history)
        h = np.asarray(history, dtype=float)
        if len(h) < self.rho:
            raise ValueError(f"need {self.rho} rates of history, got {len(h)}")
        base = np.concatenate(([1.0], h[-self.rho:][::-1]))
        f = self._transition(int(position))
        return float((1.0 - f) * (self.coef_low_ @ base) + f * (self.coef_high_ @ base))

    def to_state(self) -> dict:
        return {"rho": self.rho, "c": self.c, "gamma": self.gamma,
                "coef_low": [float(c) for c in self.coef_low_],
                "coef_high": [float(c) for c in self.coef_high_],
                "ridge_fallback": bool(self.ridge_fallback_)}

    @classmethod
    def from_state(cls, state: dict) -> "LstarForecaster":
        obj = cls(rho=int(state["rho"]), c=float(state["c"]), gamma=float(state["gamma"]))
        obj.coef_low_ = np.asarray(state["coef_low"], dtype=float)
        obj.coef_high_ = np.asarray(state["coef_high"], dtype=float)
        obj.ridge_fallback_ = bool(state["ridge_fallback"])
        return obj


# --------------------------------------------------------------------------
# Single-hidden-layer network
# --------------------------------------------------------------------------


class FcForecaster(BaseForecaster):
    """One ReLU hidden layer, linear output, squared loss, mini-batch SGD."""

    def __init__(self, rho: int = 4, hidden: int = 32, learning_rate: float = 0.01,
                 epochs: int = 200, batch_size: int = 16, seed: int = 0,
                 validation_fraction: float = 0.1, patience: int = 10):
        self.rho = rho
        self.hidden = hidden
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.seed = seed
        self.validation_fraction = validation_fraction
        self.patience = patience

    @staticmethod
    def loss_and_grads(weights, X, y):
        """Mean squared-error loss and its exact gradients.

        ``weights`` is (W1, b1, w2, b2) with shapes (rho, hidden), (hidden,),
        (hidden,), (). Kept separate from the training loop so the gradients
        can be verified by finite differences.
        """
        W1, b1, w2, b2 = weights
        A = X @ W1 + b1
        H = np.maximum(A, 0.0)
        pred = H @ w2 + b2
        err = pred - y
        n = len(y)
        loss = 0.5 * float(err @ err) / n
        g_pred = err / n
        g_w2 = H.T @ g_pred
        g_b2 = float(g_pred.sum())
        g_H = np.outer(g_pred, w2)
        g_A = g_H * (A > 0.0)
        g_W1 = X.T @ g_A
        g_b1 = g_A.sum(axis=0)
        return loss, (g_W1, g_b1, g_w2, g_b2)

    def fit(self, rates):
        X, y = training.make_windows(_rate_runs(rates), self.rho)
        X = X[:, :, 0]  # flat rho-lag input
        if len(y) < 50:
            raise DataError(f"FC({self.rho}) needs at least 50 training windows, got {len(y)}")
        rng = np.random.default_rng([self.seed, zlib.crc32(b"fc")])
        W1 = rng.uniform(-0.1, 0.1, size=(self.rho, self.hidden))
        b1 = rng.uniform(-0.1, 0.1, size=self.hidden)
        w2 = rng.uniform(-0.1, 0.1, size=self.hidden)
        b2 = float(rng.uniform(-0.1, 0.1))

        n_val = int(self.validation_fraction * len(y))
        if len(y) - n_val < 1:
            n_val = 0
        X_tr, y_tr = X[:len(y) - n_val], y[:len(y) - n_val]
        X_val, y_val = X[len(y) - n_val:], y[len(y) - n_val:]

        best = (W1.copy(), b1.copy(), w2.copy(), b2)
        best_monitor = np.inf
        since_best = 0
        self.flagged_ = False
        for _epoch in range(self.epochs):
            order = rng.permutation(len(y_tr))
            for start in range(0, len(y_tr), self.batch_size):
                idx = order[start:start + self.batch_size]
                _, (g_W1, g_b1, g_w2, g_b2) = self.loss_and_grads(
                    (W1, b1, w2, b2), X_tr[idx], y_tr[idx]
                )
                W1 -= self.learning_rate * g_W1
                b1 -= self.learning_rate * g_b1
                w2 -= self.learning_rate * g_w2
                b2 -= self.learning_rate * g_b2
            if not all(np.all(np.isfinite(p)) for p in (W1, b1, w2, np.array(b2))):
                # diverged: fall back to the zero predictor
                self.flagged_ = True
                zero = np.zeros_like
                best = (zero(W1), zero(b1), zero(w2), 0.0)
                break
            if n_val > 0:
                monitor, _ = self.loss_and_grads((W1, b1, w2, b2), X_val, y_val)
            else:
                monitor, _ = self.loss_and_grads((W1, b1, w2, b2), X_tr, y_tr)
            if monitor < best_monitor:
                best_monitor = monitor
                best = (W1.copy(), b1.copy(), w2.copy(), b2)
                since_best = 0
            else:
                since_best += 1
                if since_best > self.patience:
                    break
        self.weights_ = best
        return self

    def predict_next(self, history, position=None, month=None) -> float:
        self._check_fitted("weights_")
        h = np.asarray(history, dtype=float)
        if len(h) < self.rho:
            raise ValueError(f"need {self.rho} rates of history, got {len(h)}")
        W1, b1, w2, b2 = self.weights_
        hidden = np.maximum(h[-self.rho:] @ W1 + b1, 0.0)
        return float(hidden @ w2 + b2)

    def to_state(self) -> dict:
        W1, b1, w2, b2 = self.weights_
        return {"rho": self.rho, "hidden": self.hidden, "flagged": bool(self.flagged_),
                "W1": [[float(v) for v in row] for row in W1],
                "b1": [float(v) for v in b1], "w2": [float(v) for v in w2],
                "b2": float(b2)}

    @classmethod
    def from_state(cls, state: dict) -> "FcForecaster":
        obj = cls(rho=int(state["rho"]), hidden=int(state["hidden"]))
        obj.weights_ = (
            np.asarray(state["W1"], dtype=float),
            np.asarray(state["b1"], dtype=float),
            np.asarray(state["w2"], dtype=float),
            float(state["b2"]),
        )
        obj.flagged_ = bool(state["flagged"])
        return obj


# --------------------------------------------------------------------------
# GRU ablations
# --------------------------------------------------------------------------


class GruNodeForecaster(BaseForecaster):
    """Prediction-only wrapper around one scalar GRU's parameters.

    The unit consumes the last rho observations from a zero state, matching
    the length-rho windows it was trained on; recursion slides predictions
    into that window.
    """

    def __init__(self, rho: int = 4):
        self.rho = rho

    def set_params_vector(self, theta) -> "GruNodeForecaster":
        self.params_ = cells.GruParams.from_vector(np.asarray(theta, dtype=float))
        return self

    def predict_next(self, history, position=None, month=None) -> float:
        self._check_fitted("params_")
        h = np.asarray(history, dtype=float)
        if len(h) < 1:
            raise ValueError("need at least one rate of history")
        return float(cells.unroll(self.params_, h[-self.rho:])[-1])

    def to_state(self) -> dict:
        return {"rho": self.rho, "params": [float(v) for v in self.params_.as_vector()]}

    @classmethod
    def from_state(cls, state: dict) -> "GruNodeForecaster":
        return cls(rho=int(state["rho"])).set_params_vector(state["params"])


def fit_s_gru(view: panel.PanelView, config: hrnn.TrainConfig) -> GruNodeForecaster:
    """One GRU on the pooled windows of every trainable node."""
    xs, ys = [], []
    for node in view.trainable_nodes(config.min_train_rates):
        X, Y = hrnn.node_windows(view.node_rates(node), config.rho)
        if X.shape[0]:
            xs.append(X)
            ys.append(Y)
    if not xs:
        raise DataError("no trainable nodes to pool")
    X = np.concatenate(xs)
    Y = np.concatenate(ys)
    rng = np.random.default_rng([config.seed, zlib.crc32(b"s_gru")])
    result = hrnn.fit_node_gru(X, Y, rng=rng, config=config, tau_theta=0.0)
    fc = GruNodeForecaster(rho=config.rho).set_params_vector(result.theta)
    fc.fit_result_ = result
    return fc


def fit_i_gru(view: panel.PanelView, config: hrnn.TrainConfig) -> hrnn.HrnnModel:
    """Independent per-node GRUs: the tree model with every pull removed.

    Parameter-identical to ``train_hrnn`` with a zero precision override under
    the same seed, because it *is* that call.
    """
    return hrnn.train_hrnn(view, replace(config, tau_theta_override=0.0))


class KnnGruForecaster(BaseForecaster):
    """GRU whose input is the node's rate plus its k most-correlated peers.

    At prediction time the node's own channel feeds back recursively while
    the neighbor channels are held at their last observed values.
    """

    def __init__(self, rho: int = 4, k: int = 5):
        self.rho = rho
        self.k = k

    def bind(self, series: dict[int, panel.RateSeries]) -> None:
        self.series_ = {
            n: dict(zip(map(int, rs.months), map(float, rs.rates)))
            for n, rs in series.items()
            if n in self.neighbors_
        }

    def path(self, window: SeriesWindow, horizon: int) -> np.ndarray | None:
        self._check_fitted("theta_")
        if getattr(self, "series_", None) is None and self.neighbors_:
            raise NotFittedError("KnnGruForecaster has no bound series; call bind()")
        n_hist = min(len(window.history), self.rho)
        rows = []
        for j in range(n_hist):
            month = window.target_month - n_hist + j
            row = [float(window.history[len(window.history) - n_hist + j])]
            for nb in self.neighbors_:
                val = self.series_[nb].get(month)
                if val is None:
                    return None  # a neighbor misses a window month; skip the pair
                row.append(val)
            rows.append(row)
        if not rows:
            return None
        frozen = list(rows[-1][1:])
        preds = []
        for _ in range(horizon + 1):
            X = np.array(rows[-self.rho:])[None, :, :]  # (1, <=rho, k+1)
            S, _ = cells.gru_forward(self.theta_, X)
            pred = float(S[0, -1])
            preds.append(pred)
            rows.append([pred] + frozen)
        return np.array(preds)

    def predict_next(self, history, position=None, month=None) -> float:
        raise NotImplementedError("use path(); neighbor inputs are resolved per window")

    def to_state(self) -> dict:
        return {"rho": self.rho, "k": self.k,
                "neighbors": list(self.neighbors_),
                "theta": [float(v) for v in self.theta_]}

    @classmethod
    def from_state(cls, state: dict) -> "KnnGruForecaster":
        obj = cls(rho=int(state["rho"]), k=int(state["k"]))
        obj.neighbors_ = [int(n) for n in state["neighbors"]]
        obj.theta_ = np.asarray(state["theta"], dtype=float)
        obj.series_ = None
        return obj


def _aligned_channel_runs(
    view: panel.PanelView, node: int, neighbors: list[int]
) -> list[np.ndarray]:
    """Contiguous runs of months where the node and all neighbors have rates."""
    own = view.node_rates(node)
    lookups = [dict(zip(map(int, view.node_rates(nb).months),
                        map(float, view.node_rates(nb).rates))) for nb in neighbors]
    runs: list[np.ndarray] = []
    current: list[list[float]] = []
    prev_month = None
    for month, rate in zip(own.months, own.rates):
        month = int(month)
        row = [float(rate)]
        ok = True
        for lu in lookups:
            val = lu.get(month)
            if val is None:
                ok = False
                break
            row.append(val)
        if not ok or (prev_month is not None and month != prev_month + 1):
            if current:
                runs.append(np.array(current))
            current = []
        if ok:
            current.append(row)
            prev_month = month
        else:
            prev_month = None
    if current:
        runs.append(np.array(current))
    return runs


def fit_knn_gru(
    view: panel.PanelView, k: int, config: hrnn.TrainConfig
) -> dict[int, KnnGruForecaster]:
    """Per-node neighbor-augmented GRUs; k = 0 reduces to independent GRUs."""
    out: dict[int, KnnGruForecaster] = {}
    for node in view.trainable_nodes(config.min_train_rates):
        neighbors = panel.knn_neighbors(view, node, k)
        runs = _aligned_channel_runs(view, node, neighbors)
        X, Y = training.make_windows(runs, config.rho)
        if X.shape[0] == 0:
            logger.warning("node %d: no aligned windows with %d neighbors, skipped",
                           node, len(neighbors))
            continue
        result = hrnn.fit_node_gru(
            X, Y, rng=hrnn.node_rng(config.seed, node), config=config, tau_theta=0.0
        )
        fc = KnnGruForecaster(rho=config.rho, k=k)
        fc.neighbors_ = neighbors
        fc.theta_ = result.theta
        fc.series_ = None
        fc.fit_result_ = result
        out[node] = fc
    return out


def fit_ar(rates, rho: int) -> ArForecaster:
    return ArForecaster(rho=rho).fit(rates)


def fit_phillips(rates: panel.RateSeries, exog: ExogSeries, rho: int) -> PhillipsForecaster:
    return PhillipsForecaster(rho=rho).fit(rates, exog)


def fit_var(group, target: int, rho: int) -> VarForecaster:
    return VarForecaster(rho=rho).fit(group, target)


def rw_predict(history, rho: int) -> float:
    return RwForecaster(rho=rho).fit().predict_next(history)


def fit_ar_gap(rates, rho: int) -> ArGapForecaster:
    return ArGapForecaster(rho=rho).fit(rates)


def fit_lstar(rates, rho: int, c: float = 2.0, gamma: float = 0.3) -> LstarForecaster:
    return LstarForecaster(rho=rho, c=c, gamma=gamma).fit(rates)


def fit_fc(rates, rho: int, hidden: int = 32, **kwargs) -> FcForecaster:
    return FcForecaster(rho=rho, hidden=hidden, **kwargs).fit(rates)
