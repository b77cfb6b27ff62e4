"""Panel-level model assembly: fit, persist, reload, and bind data.

A :class:`PanelModel` is a named forecaster covering (a subset of) the
panel's nodes. Kinds backed by per-node estimators skip nodes whose data
fails the estimator's preconditions and log the reason; the evaluation loop
later skips those (model, node) pairs.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import baselines, hrnn, panel
from .errors import DataError, ModelIOError
from .serialize import load_bundle, save_bundle

logger = logging.getLogger(__name__)

KINDS = ("ar", "phillips", "var", "rw", "ar_gap", "lstar", "fc",
         "s_gru", "i_gru", "knn_gru", "hrnn")

VAR_MAX_GROUP = 8  # a node plus at most 7 best-correlated siblings


@dataclass(frozen=True)
class ModelSpec:
    """One model entry of a run configuration."""

    name: str
    kind: str
    rho: int = 4
    alpha: float = 1.5
    k: int = 5
    c: float = 2.0
    gamma: float = 0.3
    hidden: int = 32
    learning_rate: float = 0.01
    epochs: int = 150
    batch_size: int = 16
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}, expected one of {KINDS}")

    def train_config(self) -> hrnn.TrainConfig:
        return hrnn.TrainConfig(
            alpha=self.alpha,
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            seed=self.seed,
            rho=self.rho,
            batch_size=self.batch_size,
        )


@dataclass
class PanelModel:
    """A fitted model able to produce forecast paths for supported nodes."""

    name: str
    kind: str
    min_history: int
    per_node: dict[int, object] = field(default_factory=dict)
    shared: object | None = None

    def supports(self, node: int) -> bool:
        return self.shared is not None or node in self.per_node

    def forecaster(self, node: int):
        return self.shared if self.shared is not None else self.per_node[node]

    def path(self, window, horizon: int):
        return self.forecaster(window.node).path(window, horizon)


def _min_history(kind: str, rho: int) -> int:
    return 2 * rho if kind == "ar_gap" else rho


def hrnn_panel_model(name: str, model: hrnn.HrnnModel) -> PanelModel:
    per_node = {
        node: baselines.GruNodeForecaster(rho=model.rho).set_params_vector(
            params.as_vector()
        )
        for node, params in model.theta.items()
    }
    return PanelModel(name=name, kind="hrnn", min_history=model.rho,
                      per_node=per_node)


def _var_group(train_view: panel.PanelView, node: int) -> list[int]:
    """The node plus its best-correlated siblings, capped at VAR_MAX_GROUP."""
    ds = train_view.dataset
    parent = ds.parents.get(node)
    if parent is None:
        return [node]
    siblings = [s for s in ds.children(parent) if s != node]
    scored = []
    for s in siblings:
        corr, n = panel._overlap_correlation(train_view.node_rates(node),
                                             train_view.node_rates(s))
        if n >= panel.MIN_OVERLAP_MONTHS:
            scored.append((corr, s))
    scored.sort(key=lambda t: (-t[0], t[1]))
    return [node] + [s for _, s in scored[:VAR_MAX_GROUP - 1]]


def build_model(
    spec: ModelSpec,
    train_view: panel.PanelView,
    exog: baselines.ExogSeries | None = None,
) -> PanelModel:
    """Fit one model of the configured kind on the training view."""
    ds = train_view.dataset
    model = PanelModel(name=spec.name, kind=spec.kind,
                       min_history=_min_history(spec.kind, spec.rho))

    if spec.kind == "rw":
        model.shared = baselines.RwForecaster(rho=spec.rho).fit()
        return model

    if spec.kind == "s_gru":
        model.shared = baselines.fit_s_gru(train_view, spec.train_config())
        return model

    if spec.kind in ("hrnn", "i_gru"):
        config = spec.train_config()
        fitted = (hrnn.train_hrnn(train_view, config) if spec.kind == "hrnn"
                  else baselines.fit_i_gru(train_view, config))
        wrapped = hrnn_panel_model(spec.name, fitted)
        model.per_node = wrapped.per_node
        model.hrnn_model_ = fitted
        return model

    if spec.kind == "knn_gru":
        fitted = baselines.fit_knn_gru(train_view, spec.k, spec.train_config())
        for fc in fitted.values():
            fc.bind(ds.rates)
        model.per_node = fitted
        return model

    if spec.kind == "phillips" and exog is None:
        raise DataError(f"model {spec.name}: phillips requires an exogenous series "
                        "(--exog / run.exog)")

    for node in sorted(train_view.node_ids):
        rs = train_view.node_rates(node)
        try:
            if spec.kind == "ar":
                model.per_node[node] = baselines.ArForecaster(rho=spec.rho).fit(rs)
            elif spec.kind == "ar_gap":
                model.per_node[node] = baselines.ArGapForecaster(rho=spec.rho).fit(rs)
            elif spec.kind == "lstar":
                model.per_node[node] = baselines.LstarForecaster(
                    rho=spec.rho, c=spec.c, gamma=spec.gamma).fit(rs)
            elif spec.kind == "fc":
                model.per_node[node] = baselines.FcForecaster(
                    rho=spec.rho, hidden=spec.hidden,
                    learning_rate=spec.learning_rate, epochs=spec.epochs,
                    batch_size=spec.batch_size, seed=spec.seed).fit(rs)
            elif spec.kind == "phillips":
                model.per_node[node] = baselines.PhillipsForecaster(
                    rho=spec.rho).fit(rs, exog)
            elif spec.kind == "var":
                group_ids = _var_group(train_view, node)
                if len(group_ids) < 2:
                    raise DataError("no siblings to form a system with")
                group = [
                    (g, train_view.node_rates(g).months, train_view.node_rates(g).rates)
                    for g in group_ids
                ]
                fc = baselines.VarForecaster(rho=spec.rho).fit(group, node)
                fc.bind(ds.rates)
                model.per_node[node] = fc
            else:
                raise ValueError(f"unhandled kind {spec.kind}")
        except DataError as exc:
            logger.info("model %s: node %d skipped (%s)", spec.name, node, exc)
    if not model.per_node:
        raise DataError(f"model {spec.name}: no node could be fitted")
    return model


def save_panel_model(model: PanelModel, path) -> None:
    if model.kind in ("hrnn", "i_gru"):
        state = {"name": model.name, "model_kind": model.kind,
                 "hrnn": hrnn._model_state(model.hrnn_model_)}
    elif model.shared is not None:
        state = {"name": model.name, "model_kind": model.kind,
                 "shared": model.shared.to_state()}
    else:
        state = {"name": model.name, "model_kind": model.kind,
                 "nodes": {str(n): fc.to_state()
                           for n, fc in sorted(model.per_node.items())}}
    save_bundle(path, kind="panel-model", state=state)


_ESTIMATOR_TYPES = {
    "ar": baselines.ArForecaster,
    "phillips": baselines.PhillipsForecaster,
    "var": baselines.VarForecaster,
    "rw": baselines.RwForecaster,
    "ar_gap": baselines.ArGapForecaster,
    "lstar": baselines.LstarForecaster,
    "fc": baselines.FcForecaster,
    "s_gru": baselines.GruNodeForecaster,
    "knn_gru": baselines.KnnGruForecaster,
}


def load_panel_model(
    path,
    dataset: panel.HierarchyDataset | None = None,
    exog: baselines.ExogSeries | None = None,
) -> PanelModel:
    """Reload a fitted model and rebind it to the panel data it predicts from."""
    _, state = load_bundle(path, expected_kind="panel-model")
    kind = state["model_kind"]
    name = state["name"]
    if kind in ("hrnn", "i_gru"):
        fitted = hrnn._model_from_state(state["hrnn"])
        model = hrnn_panel_model(name, fitted)
        model.kind = kind
        model.hrnn_model_ = fitted
        return model
    est_type = _ESTIMATOR_TYPES.get(kind)
    if est_type is None:
        raise ModelIOError(f"{path}: unknown model kind {kind!r}")
    if "shared" in state:
        shared = est_type.from_state(state["shared"])
        rho = shared.rho
        model = PanelModel(name=name, kind=kind, min_history=_min_history(kind, rho),
                           shared=shared)
        return model
    per_node = {int(n): est_type.from_state(s) for n, s in state["nodes"].items()}
    rho = next(iter(per_node.values())).rho
    model = PanelModel(name=name, kind=kind,
                       min_history=_min_history(kind, rho), per_node=per_node)
    for fc in per_node.values():
        if isinstance(fc, (baselines.VarForecaster, baselines.KnnGruForecaster)):
            if dataset is None:
                raise ModelIOError(f"{path}: {kind} model needs the panel to bind inputs")
            fc.bind(dataset.rates)
        elif isinstance(fc, baselines.PhillipsForecaster):
            if exog is None:
                raise ModelIOError(f"{path}: phillips model needs the exogenous series")
            fc.bind_exog(exog)
    return model
