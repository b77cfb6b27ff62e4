"""Shared stochastic-gradient training loop for the scalar GRU fitters.

The loop minimizes the mean per-window negative log posterior (up to
constants):

    (1/W) * sum_w [ 0.5 * tau_like * sum_t (y - s)^2 ]
    + (tau_prior / (2 W)) * ||theta - prior_mean||^2

so gradient magnitudes are comparable across nodes with different history
lengths. The likelihood part takes an explicit clipped gradient step; the
quadratic prior term is applied as an exact proximal shrinkage toward the
prior mean after each step. The proximal step is the closed-form minimizer
of the prior term plus the step-size trust penalty, so arbitrarily large
prior precisions pin parameters to the mean instead of orbiting it at
radius learning_rate * clip, and a zero precision leaves the update
bit-identical to plain SGD.

Windows are shuffled each epoch from the caller's generator; validation
uses the chronologically last fraction of windows, with best-checkpoint
restoration after the patience runs out.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import cells


@dataclass
class FitResult:
    theta: np.ndarray
    epochs_run: int
    first_epoch_loss: float
    final_loss: float
    best_monitor: float
    monitor_history: list[float] = field(default_factory=list)
    diverged: bool = False


def make_windows(runs: list[np.ndarray], rho: int) -> tuple[np.ndarray, np.ndarray]:
    """Input windows of rho consecutive steps, each predicting the next rate.

    Each run is either a 1-D rate array or a (length, d) channel matrix whose
    column 0 is the target series. Window w has inputs run[i:i+rho] and target
    run[i+rho, 0]; windows never span two runs. Returns X with shape
    (W, rho, d) and y with shape (W,).
    """
    if rho < 1:
        raise ValueError("rho must be at least 1")
    xs, ys = [], []
    for run in runs:
        arr = np.asarray(run, dtype=float)
        if arr.ndim == 1:
            arr = arr[:, None]
        n = arr.shape[0]
        for i in range(n - rho):
            xs.append(arr[i:i + rho])
            ys.append(arr[i + rho, 0])
    if not xs:
        d = 1
        if runs:
            first = np.asarray(runs[0], dtype=float)
            d = first.shape[1] if first.ndim == 2 else 1
        return np.empty((0, rho, d)), np.empty(0)
    return np.stack(xs), np.array(ys)


def _clip(grad: np.ndarray, max_norm: float) -> np.ndarray:
    norm = float(np.linalg.norm(grad))
    if max_norm > 0 and norm > max_norm:
        return grad * (max_norm / norm)
    return grad


def _objective(theta, X, y, tau_like, prior_pull) -> float:
    """Mean per-window final-step loss, plus the amortized prior term."""
    S, _ = cells.gru_forward(theta, X)
    like = 0.5 * tau_like * float(np.sum((S[:, -1] - y) ** 2)) / X.shape[0]
    return like + prior_pull(theta)


def fit_gru_sgd(
    X: np.ndarray,
    y: np.ndarray,
    *,
    rng: np.random.Generator,
    learning_rate: float = 0.01,
    epochs: int = 200,
    batch_size: int = 16,
    gradient_clip: float = 5.0,
    tau_like: float = 1.0,
    tau_prior: float = 0.0,
    prior_mean: np.ndarray | None = None,
    validation_fraction: float = 0.1,
    patience: int = 10,
) -> FitResult:
    """Fit one GRU (input dimension inferred from X) by mini-batch SGD.

    The monitored quantity for early stopping is the validation objective
    (mean per-window likelihood loss plus the amortized prior pull); with no
    validation windows the training objective is monitored instead. The
    checkpoint with the best monitor value is restored. On a non-finite loss
    the fit reverts to the prior mean (zeros if none) and is flagged.
    """
    if learning_rate <= 0:
        raise ValueError("learning_rate must be positive")
    if epochs < 1:
        raise ValueError("epochs must be at least 1")
    if not 0.0 <= validation_fraction < 0.5:
        raise ValueError("validation_fraction must be in [0, 0.5)")
    W, _rho, d = X.shape
    if W < 1:
        raise ValueError("no training windows")

    size = cells.gru_theta_size(d)
    mean = np.zeros(size) if prior_mean is None else np.asarray(prior_mean, dtype=float)
    if mean.shape != (size,):
        raise ValueError(f"prior_mean must have shape ({size},)")

    n_val = int(validation_fraction * W)
    if W - n_val < 1:
        n_val = 0
    X_tr, y_tr = X[:W - n_val], y[:W - n_val]
    X_val, y_val = X[W - n_val:], y[W - n_val:]
    n_tr = X_tr.shape[0]

    def prior_pull(theta: np.ndarray) -> float:
        if tau_prior == 0.0:
            return 0.0
        diff = theta - mean
        return 0.5 * tau_prior * float(diff @ diff) / n_tr

    theta = rng.uniform(-0.1, 0.1, size=size)
    best_theta = theta.copy()
    best_monitor = np.inf
    monitor_history: list[float] = []
    first_epoch_loss = np.nan
    since_best = 0
    epochs_run = 0
    diverged = False

    # Proximal coefficient of the amortized prior: one shrinkage per update.
    shrink = 1.0 / (1.0 + learning_rate * tau_prior / n_tr)

    for epoch in range(epochs):
        order = rng.permutation(n_tr)
        for start in range(0, n_tr, batch_size):
            idx = order[start:start + batch_size]
            Xb, yb = X_tr[idx], y_tr[idx]
            S, cache = cells.gru_forward(theta, Xb)
            G = np.zeros_like(S)
            G[:, -1] = tau_like * (S[:, -1] - yb) / len(idx)
            grad = cells.gru_backward(theta, Xb, S, cache, G)
            theta = theta - learning_rate * _clip(grad, gradient_clip)
            if tau_prior != 0.0:
                theta = mean + shrink * (theta - mean)
        epochs_run = epoch + 1

        if not np.all(np.isfinite(theta)):
            diverged = True
            theta = mean.copy()
            break
        train_loss = _objective(theta, X_tr, y_tr, tau_like, prior_pull)
        if not np.isfinite(train_loss):
            diverged = True
            theta = mean.copy()
            break
        if epoch == 0:
            first_epoch_loss = train_loss
        if n_val > 0:
            monitor = _objective(theta, X_val, y_val, tau_like, prior_pull)
        else:
            monitor = train_loss
        monitor_history.append(monitor)
        if monitor < best_monitor:
            best_monitor = monitor
            best_theta = theta.copy()
            since_best = 0
        else:
            since_best += 1
            if since_best > patience:
                break

    if diverged:
        best_theta = mean.copy()
        best_monitor = np.inf
    theta = best_theta
    final_loss = _objective(theta, X_tr, y_tr, tau_like, prior_pull)
    if not np.isfinite(first_epoch_loss):
        first_epoch_loss = final_loss
    return FitResult(
        theta=theta,
        epochs_run=epochs_run,
        first_epoch_loss=float(first_epoch_loss),
        final_loss=float(final_loss),
        best_monitor=float(best_monitor) if np.isfinite(best_monitor) else float("inf"),
        monitor_history=monitor_history,
        diverged=diverged,
    )
