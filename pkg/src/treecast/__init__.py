"""Hierarchical monthly time-series forecasting.

One tiny gated recurrent unit per node of an index hierarchy, with child
parameters pulled toward their parent's through correlation-weighted
Gaussian priors, plus the classical autoregressive baselines and the
evaluation machinery to compare them across forecast horizons.
"""

from .cells import (
    CellState,
    GruParams,
    LossSpec,
    LstmParams,
    RnnParams,
    bptt_gradients,
    finite_diff_check,
    gru_step,
    lstm_step,
    rnn_step,
    unroll,
)
from .errors import (
    DataError,
    HierarchyError,
    ModelIOError,
    PanelFormatError,
    TreecastError,
)
from .evaluation import ForecastSet, EvalReport, aggregate, horizon_eval, quarterly_retrain_eval
from .hrnn import HrnnModel, TrainConfig, forecast, load_model, node_log_posterior, save_model, train_hrnn
from .metrics import diebold_mariano, distance_correlation, pearson, relative_rmse, rmse
from .panel import (
    HierarchyDataset,
    IndexSeries,
    PanelView,
    RateSeries,
    chrono_split,
    descriptive_stats,
    knn_neighbors,
    log_change,
    parent_correlation,
    parse_panel,
)

__version__ = "0.1.0"

__all__ = [
    "CellState", "GruParams", "LossSpec", "LstmParams", "RnnParams",
    "bptt_gradients", "finite_diff_check", "gru_step", "lstm_step", "rnn_step",
    "unroll",
    "DataError", "HierarchyError", "ModelIOError", "PanelFormatError",
    "TreecastError",
    "ForecastSet", "EvalReport", "aggregate", "horizon_eval",
    "quarterly_retrain_eval",
    "HrnnModel", "TrainConfig", "forecast", "load_model", "node_log_posterior",
    "save_model", "train_hrnn",
    "diebold_mariano", "distance_correlation", "pearson", "relative_rmse", "rmse",
    "HierarchyDataset", "IndexSeries", "PanelView", "RateSeries", "chrono_split",
    "descriptive_stats", "knn_neighbors", "log_change", "parent_correlation",
    "parse_panel",
]
