"""Hierarchy-coupled GRU forecaster.

One scalar GRU per node. Nodes are fitted top-down: the root gets a
zero-mean, unit-precision pull; every other node is pulled toward its
parent's already-fitted parameters with precision ``exp(alpha + C_n)`` where
``C_n`` is the node/parent training-rate correlation. Fitting maximizes the
per-node log posterior (Gaussian likelihood with fixed unit precision plus
the Gaussian parameter prior) by mini-batch SGD; see :mod:`treecast.training`.

Setting ``tau_theta_override = 0`` removes every pull, which reduces the
model to independently trained per-node GRUs (bit-for-bit, given equal
seeds).
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

from . import cells, panel, training
from .errors import DataError
from .serialize import load_bundle, save_bundle

N_GRU_PARAMS = 9


@dataclass(frozen=True)
class TrainConfig:
    alpha: float = 1.5
    learning_rate: float = 0.01
    epochs: int = 150
    validation_fraction: float = 0.1
    gradient_clip: float = 5.0
    seed: int = 0
    rho: int = 4
    batch_size: int = 16
    patience: int = 10
    tau_like: float = 1.0  # likelihood precision, fixed for all nodes
    min_train_rates: int = panel.MIN_TRAIN_RATES
    tau_theta_override: float | None = None  # replaces every prior precision when set

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if not 0.0 <= self.validation_fraction < 0.5:
            raise ValueError("validation_fraction must be in [0, 0.5)")
        if self.rho < 1:
            raise ValueError("rho must be at least 1")


@dataclass(frozen=True)
class PriorSpec:
    alpha: float
    precision: dict[int, float]  # node -> tau_theta
    likelihood_precision: dict[int, float]  # node -> tau_n


@dataclass(frozen=True)
class NodeFit:
    params: cells.GruParams
    tau_theta: float
    prior_mean: tuple[float, ...]
    first_epoch_loss: float
    final_loss: float
    best_monitor: float
    epochs_run: int
    flags: tuple[str, ...] = ()


@dataclass(frozen=True)
class HrnnModel:
    theta: dict[int, cells.GruParams]
    prior: PriorSpec
    node_fits: dict[int, NodeFit]
    skipped: dict[int, str]  # untrainable nodes -> reason
    seed: int
    rho: int

    def __contains__(self, node: int) -> bool:
        return node in self.theta


def node_rng(seed: int, node: int) -> np.random.Generator:
    """Named per-node random substream; independent of training order."""
    return np.random.default_rng([seed, node])


def node_log_posterior(
    theta: cells.GruParams,
    prior_mean: cells.GruParams,
    tau_theta: float,
    tau_n: float,
    rates,
) -> float:
    """Log posterior of one node's parameters, constants included.

    Likelihood: each rate x_t against the GRU output after consuming the
    rates before it (the first rate is predicted by the zero initial state).
    Prior: isotropic Gaussian around ``prior_mean``; a zero-precision prior
    contributes exactly 0 so the no-prior limit is well defined.
    """
    if tau_n <= 0:
        raise ValueError(f"likelihood precision must be positive, got {tau_n}")
    x = np.asarray(rates, dtype=float)
    if len(x) < 2:
        raise ValueError("need at least 2 rates")
    preds = np.concatenate(([0.0], cells.unroll(theta, x[:-1])))
    loglike = float(
        np.sum(0.5 * math.log(tau_n / (2.0 * math.pi)) - 0.5 * tau_n * (x - preds) ** 2)
    )
    if tau_theta == 0.0:
        return loglike
    if tau_theta < 0:
        raise ValueError(f"prior precision must be nonnegative, got {tau_theta}")
    diff = theta.as_vector() - prior_mean.as_vector()
    logprior = 0.5 * N_GRU_PARAMS * math.log(tau_theta / (2.0 * math.pi))
    logprior -= 0.5 * tau_theta * float(diff @ diff)
    return loglike + logprior


def _bfs_order(view: panel.PanelView) -> list[int]:
    ds = view.dataset
    order = []
    queue = deque([ds.root])
    while queue:
        node = queue.popleft()
        order.append(node)
        queue.extend(ds.children(node))
    return order


def node_windows(rs: panel.RateSeries, rho: int) -> tuple[np.ndarray, np.ndarray]:
    runs = [rs.rates[r] for r in rs.runs()]
    return training.make_windows(runs, rho)


def fit_node_gru(
    X: np.ndarray,
    Y: np.ndarray,
    *,
    rng: np.random.Generator,
    config: TrainConfig,
    tau_theta: float = 0.0,
    prior_mean: np.ndarray | None = None,
) -> training.FitResult:
    """One GRU fit under a TrainConfig; shared by the tree and the ablations."""
    return training.fit_gru_sgd(
        X,
        Y,
        rng=rng,
        learning_rate=config.learning_rate,
        epochs=config.epochs,
        batch_size=config.batch_size,
        gradient_clip=config.gradient_clip,
        tau_like=config.tau_like,
        tau_prior=tau_theta,
        prior_mean=prior_mean,
        validation_fraction=config.validation_fraction,
        patience=config.patience,
    )


def train_hrnn(view: panel.PanelView, config: TrainConfig) -> HrnnModel:
    """Fit the whole tree top-down, parents before children.

    Within a level the nodes are independent (each node's randomness comes
    from its own substream), so training order does not affect the result.
    Untrainable nodes (fewer than ``min_train_rates`` training rates, or no
    usable windows) are skipped with a reason and excluded from ``theta``.
    """
    ds = view.dataset
    theta: dict[int, cells.GruParams] = {}
    node_fits: dict[int, NodeFit] = {}
    skipped: dict[int, str] = {}
    precision: dict[int, float] = {}

    for node in _bfs_order(view):
        rs = view.node_rates(node)
        if len(rs) < config.min_train_rates:
            skipped[node] = f"only {len(rs)} training rates (< {config.min_train_rates})"
            continue
        X, Y = node_windows(rs, config.rho)
        if X.shape[0] == 0:
            skipped[node] = f"no contiguous run of {config.rho + 1} training months"
            continue

        flags: list[str] = []
        if node == ds.root:
            tau_theta = 1.0
            prior_mean = np.zeros(N_GRU_PARAMS)
        else:
            correlation = panel.parent_correlation(view, node)
            tau_theta = math.exp(config.alpha + correlation)
            ancestor = ds.parents[node]
            while ancestor not in theta and ancestor != ds.root:
                ancestor = ds.parents[ancestor]
            if ancestor in theta:
                prior_mean = theta[ancestor].as_vector()
                if ancestor != ds.parents[node]:
                    flags.append(f"prior_from_ancestor_{ancestor}")
            else:
                tau_theta = 1.0
                prior_mean = np.zeros(N_GRU_PARAMS)
                flags.append("prior_root_fallback")
        if config.tau_theta_override is not None:
            tau_theta = config.tau_theta_override

        result = fit_node_gru(
            X,
            Y,
            rng=node_rng(config.seed, node),
            config=config,
            tau_theta=tau_theta,
            prior_mean=prior_mean,
        )
        if result.diverged:
            flags.append("diverged_reverted_to_prior_mean")
        params = cells.GruParams.from_vector(result.theta)
        theta[node] = params
        precision[node] = tau_theta
        node_fits[node] = NodeFit(
            params=params,
            tau_theta=tau_theta,
            prior_mean=tuple(float(v) for v in prior_mean),
            first_epoch_loss=result.first_epoch_loss,
            final_loss=result.final_loss,
            best_monitor=result.best_monitor,
            epochs_run=result.epochs_run,
            flags=tuple(flags),
        )

    if not theta:
        raise DataError("no trainable nodes in the panel view")
    prior = PriorSpec(
        alpha=config.alpha,
        precision=precision,
        likelihood_precision={n: config.tau_like for n in theta},
    )
    return HrnnModel(
        theta=theta,
        prior=prior,
        node_fits=node_fits,
        skipped=skipped,
        seed=config.seed,
        rho=config.rho,
    )


def forecast(model: HrnnModel, node: int, history, horizon: int = 0) -> np.ndarray:
    """Recursive multi-step forecast: horizon 0 is the next month.

    The first prediction is the GRU state after consuming the history; each
    further prediction feeds the previous one back as the next input.
    """
    if node not in model.theta:
        raise KeyError(f"node {node} is not in the model")
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    x = np.asarray(history, dtype=float)
    if len(x) < 1:
        raise ValueError("history must contain at least one rate")
    params = model.theta[node]
    s = float(cells.unroll(params, x)[-1])
    preds = [s]
    for _ in range(horizon):
        s = cells.gru_step(params, preds[-1], s)
        preds.append(s)
    return np.array(preds)


# --------------------------------------------------------------------------
# Persistence
# --------------------------------------------------------------------------


def _model_state(model: HrnnModel) -> dict:
    return {
        "alpha": model.prior.alpha,
        "seed": model.seed,
        "rho": model.rho,
        "nodes": {
            str(node): {
                "params": [float(v) for v in fit.params.as_vector()],
                "tau_theta": fit.tau_theta,
                "tau_like": model.prior.likelihood_precision[node],
                "prior_mean": list(fit.prior_mean),
                "first_epoch_loss": fit.first_epoch_loss,
                "final_loss": fit.final_loss,
                "best_monitor": fit.best_monitor,
                "epochs_run": fit.epochs_run,
                "flags": list(fit.flags),
            }
            for node, fit in model.node_fits.items()
        },
        "skipped": {str(node): reason for node, reason in model.skipped.items()},
    }


def _model_from_state(state: dict) -> HrnnModel:
    theta: dict[int, cells.GruParams] = {}
    node_fits: dict[int, NodeFit] = {}
    precision: dict[int, float] = {}
    likelihood: dict[int, float] = {}
    for key, entry in state["nodes"].items():
        node = int(key)
        params = cells.GruParams.from_vector(entry["params"])
        theta[node] = params
        precision[node] = float(entry["tau_theta"])
        likelihood[node] = float(entry["tau_like"])
        node_fits[node] = NodeFit(
            params=params,
            tau_theta=float(entry["tau_theta"]),
            prior_mean=tuple(float(v) for v in entry["prior_mean"]),
            first_epoch_loss=float(entry["first_epoch_loss"]),
            final_loss=float(entry["final_loss"]),
            best_monitor=float(entry["best_monitor"]),
            epochs_run=int(entry["epochs_run"]),
            flags=tuple(entry["flags"]),
        )
    return HrnnModel(
        theta=theta,
        prior=PriorSpec(float(state["alpha"]), precision, likelihood),
        node_fits=node_fits,
        skipped={int(k): v for k, v in state["skipped"].items()},
        seed=int(state["seed"]),
        rho=int(state["rho"]),
    )


def save_model(model: HrnnModel, path) -> None:
    save_bundle(path, kind="hrnn", state=_model_state(model))


def load_model(path) -> HrnnModel:
    _, state = load_bundle(path, expected_kind="hrnn")
    return _model_from_state(state)
