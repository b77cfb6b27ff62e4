"""Multi-horizon evaluation loops, aggregation, and the retraining experiment.

``horizon_eval`` walks every test month with enough preceding history (the
max requirement across the compared models, so all models score the same
months), records each model's recursive forecast path against the actuals,
and truncates horizons that run past the test set. ``aggregate`` pools
squared errors within a group (everything, one hierarchy level, or one
sector), takes one RMSE ratio per group against the reference model, and
annotates each row with a pairwise predictive-accuracy test against the
reference.
"""

from __future__ import annotations

import csv
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from . import metrics, panel
from .baselines import SeriesWindow
from .errors import DataError
from .months import format_month, parse_month

logger = logging.getLogger(__name__)

DEFAULT_HORIZONS = (0, 1, 2, 3, 4, 8)


@dataclass
class ForecastSet:
    """Aligned (month, actual, predicted) triples keyed by model, node, horizon."""

    records: dict[tuple[str, int, int], list[tuple[int, float, float]]] = field(
        default_factory=lambda: defaultdict(list)
    )

    def add(self, model: str, node: int, horizon: int,
            month: int, actual: float, predicted: float) -> None:
        self.records[(model, node, horizon)].append((month, actual, predicted))

    def models(self) -> list[str]:
        return sorted({k[0] for k in self.records})

    def nodes(self, model: str | None = None) -> list[int]:
        return sorted({k[1] for k in self.records if model is None or k[0] == model})

    def horizons(self) -> list[int]:
        return sorted({k[2] for k in self.records})

    def pairs(self, model: str, node: int, horizon: int) -> list[tuple[int, float, float]]:
        return self.records.get((model, node, horizon), [])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["model", "node_id", "horizon", "month", "actual", "predicted"])
            for key in sorted(self.records):
                model, node, horizon = key
                for month, actual, predicted in sorted(self.records[key]):
                    writer.writerow([model, node, horizon, format_month(month),
                                     repr(float(actual)), repr(float(predicted))])

    @classmethod
    def from_csv(cls, path) -> "ForecastSet":
        fs = cls()
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            expected = ["model", "node_id", "horizon", "month", "actual", "predicted"]
            if header != expected:
                raise DataError(f"bad forecast CSV header {header!r}")
            for row in reader:
                if not row:
                    continue
                fs.add(row[0], int(row[1]), int(row[2]), parse_month(row[3]),
                       float(row[4]), float(row[5]))
        return fs


def horizon_eval(
    models: list,
    dataset: panel.HierarchyDataset,
    test_view: panel.PanelView,
    horizons: tuple[int, ...] = DEFAULT_HORIZONS,
    only_months: set[int] | None = None,
) -> ForecastSet:
    """Recursive forecasts of every model over every evaluable test month.

    A month is evaluable when it has at least ``max(min_history)`` preceding
    actual rates in the same contiguous run, so every model is scored on the
    same (node, month) pairs. Nodes a model cannot forecast are skipped for
    that model and logged.
    """
    if not models:
        raise ValueError("no models to evaluate")
    horizons = tuple(sorted(set(horizons)))
    if any(h < 0 for h in horizons):
        raise ValueError("horizons must be nonnegative")
    common_min = max(m.min_history for m in models)
    h_max = horizons[-1]
    fs = ForecastSet()
    for node in sorted(test_view.node_ids):
        test_months = set(int(m) for m in test_view.node_rates(node).months)
        if not test_months:
            continue
        full = dataset.rates[node]
        unsupported = [m for m in models if not m.supports(node)]
        for m in unsupported:
            logger.info("model %s does not cover node %d; skipped", m.name, node)
        active = [m for m in models if m.supports(node)]
        if not active:
            continue
        for run in full.runs():
            months = full.months[run]
            values = full.rates[run]
            for i in range(common_min, len(months)):
                month = int(months[i])
                if month not in test_months:
                    continue
                if only_months is not None and month not in only_months:
                    continue
                window = SeriesWindow(
                    node=node,
                    history=values[:i],
                    start_pos=run.start,
                    target_month=month,
                )
                for model in active:
                    path = model.path(window, h_max)
                    if path is None:
                        continue
                    for h in horizons:
                        if i + h >= len(months):
                            break  # horizon runs past this run: truncated
                        target_month = int(months[i + h])
                        if target_month not in test_months:
                            continue
                        if only_months is not None and target_month not in only_months:
                            continue
                        fs.add(model.name, node, h, target_month,
                               float(values[i + h]), float(path[h]))
    return fs


@dataclass(frozen=True)
class ReportRow:
    model: str
    grouping: str  # all | level | sector
    group: str
    horizon: int
    n_pairs: int
    rmse: float
    rel_rmse: float
    pearson: float  # nan except at horizon 0 or when undefined
    distance_corr: float
    dm_stat: float  # vs the reference model; nan when not computable
    dm_p: float
    flags: tuple[str, ...] = ()


@dataclass
class EvalReport:
    reference: str
    rows: list[ReportRow]

    def find(self, model: str, grouping: str, group: str, horizon: int) -> ReportRow | None:
        for row in self.rows:
            if (row.model, row.grouping, row.group, row.horizon) == (model, grouping, group, horizon):
                return row
        return None

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["model", "grouping", "group", "horizon", "n_pairs", "rmse",
                             "rel_rmse", "pearson", "distance_corr", "dm_stat", "dm_p",
                             "flags"])
            for row in self.rows:
                writer.writerow([
                    row.model, row.grouping, row.group, row.horizon, row.n_pairs,
                    repr(row.rmse), repr(row.rel_rmse), repr(row.pearson),
                    repr(row.distance_corr), repr(row.dm_stat), repr(row.dm_p),
                    ";".join(row.flags),
                ])

    def to_text(self) -> str:
        """Aligned-column tables, one per grouping and group."""
        horizons = sorted({r.horizon for r in self.rows})
        groups = sorted({(r.grouping, r.group) for r in self.rows})
        models = []
        for r in self.rows:
            if r.model not in models:
                models.append(r.model)
        lines = []
        for grouping, group in groups:
            lines.append(f"== {grouping}: {group} (relative RMSE, {self.reference} = 1.00) ==")
            header = f"{'model':<24}" + "".join(f"h={h:<5}" for h in horizons)
            header += f"{'pearson':>9}{'distance':>9}"
            lines.append(header)
            for model in models:
                cells_text = [f"{model:<24}"]
                h0 = None
                for h in horizons:
                    row = self.find(model, grouping, group, h)
                    if h == 0:
                        h0 = row
                    cells_text.append(f"{row.rel_rmse:<7.2f}" if row and math.isfinite(row.rel_rmse)
                                      else f"{'--':<7}")
                for value in ((h0.pearson if h0 else float("nan")),
                              (h0.distance_corr if h0 else float("nan"))):
                    cells_text.append(f"{value:>9.2f}" if math.isfinite(value) else f"{'--':>9}")
                lines.append("".join(cells_text))
            lines.append("")
        return "\n".join(lines)


def _group_of(dataset: panel.HierarchyDataset, grouping: str, node: int) -> str | None:
    if grouping == "all":
        return "all"
    if grouping == "level":
        return str(dataset.level(node))
    if grouping == "sector":
        sector = dataset.sectors.get(node)
        return None if sector is None else dataset.name(sector)
    raise ValueError(f"unknown grouping {grouping!r}")


def _monthly_loss_differential(pairs_a, pairs_b) -> np.ndarray:
    """Cross-sectional mean of squared-loss differentials per calendar month."""
    b_lookup = {(n, m): (a, p) for n, m, a, p in pairs_b}
    per_month: dict[int, list[float]] = defaultdict(list)
    for n, m, actual, pred in pairs_a:
        other = b_lookup.get((n, m))
        if other is None:
            continue
        d = (actual - pred) ** 2 - (other[0] - other[1]) ** 2
        per_month[m].append(d)
    return np.array([float(np.mean(per_month[m])) for m in sorted(per_month)])


def aggregate(
    forecasts: ForecastSet,
    dataset: panel.HierarchyDataset,
    grouping: str = "all",
    reference: str = "AR(1)",
) -> EvalReport:
    """Pool squared errors per group and normalize by the reference model.

    Correlations are reported at horizon 0 only. Undefined metrics stay nan
    and are flagged rather than imputed. Groups without reference forecasts
    get a flagged row with no ratio.
    """
    if reference not in forecasts.models():
        logger.warning("reference model %r absent from forecasts", reference)
    # (model, group, horizon) -> list of (node, month, actual, predicted)
    bucket: dict[tuple[str, str, int], list] = defaultdict(list)
    for (model, node, horizon), pairs in forecasts.records.items():
        group = _group_of(dataset, grouping, node)
        if group is None:
            continue
        for month, actual, predicted in pairs:
            bucket[(model, group, horizon)].append((node, month, actual, predicted))

    rows: list[ReportRow] = []
    groups = sorted({k[1] for k in bucket})
    horizons = sorted({k[2] for k in bucket})
    models = forecasts.models()
    for group in groups:
        for model in models:
            for horizon in horizons:
                entries = bucket.get((model, group, horizon))
                if not entries:
                    continue
                actual = np.array([e[2] for e in entries])
                predicted = np.array([e[3] for e in entries])
                pooled_rmse = metrics.rmse(actual, predicted)
                flags: list[str] = []
                ref_entries = bucket.get((reference, group, horizon))
                if not ref_entries:
                    rel = float("nan")
                    flags.append("no_reference")
                else:
                    ref_rmse = metrics.rmse(
                        np.array([e[2] for e in ref_entries]),
                        np.array([e[3] for e in ref_entries]),
                    )
                    rel = metrics.relative_rmse(pooled_rmse, ref_rmse)
                    if math.isnan(rel):
                        flags.append("reference_rmse_zero")
                pear = dist = float("nan")
                if horizon == 0:
                    if len(actual) >= 2:
                        pear = metrics.pearson(actual, predicted)
                        dist = metrics.distance_correlation(actual, predicted)
                    if math.isnan(pear):
                        flags.append("pearson_undefined")
                dm_stat = dm_p = float("nan")
                if ref_entries and model != reference:
                    d = _monthly_loss_differential(entries, ref_entries)
                    if len(d) >= 10:
                        dm_stat, dm_p = _dm_from_differential(d, horizon)
                    else:
                        flags.append("dm_short")
                rows.append(ReportRow(
                    model=model, grouping=grouping, group=group, horizon=horizon,
                    n_pairs=len(entries), rmse=pooled_rmse, rel_rmse=rel,
                    pearson=pear, distance_corr=dist,
                    dm_stat=dm_stat, dm_p=dm_p, flags=tuple(flags),
                ))
    return EvalReport(reference=reference, rows=rows)


def _dm_from_differential(d: np.ndarray, horizon: int) -> tuple[float, float]:
    """Diebold-Mariano statistic on an already-formed loss-differential series."""
    n = len(d)
    if np.max(np.abs(d)) == 0.0:
        return 0.0, 1.0
    d_bar = float(d.mean())
    c = d - d_bar
    lrv = float(c @ c) / n
    for lag in range(1, min(horizon, n - 1) + 1):
        lrv += 2.0 * float(c[:-lag] @ c[lag:]) / n
    lrv = max(lrv, 1e-12)
    stat = d_bar / math.sqrt(lrv / n)
    return float(stat), float(math.erfc(abs(stat) / math.sqrt(2.0)))


@dataclass(frozen=True)
class QuarterResult:
    start_month: int
    n_pairs: int
    rmse_fixed: float
    rmse_retrained: float


@dataclass
class RetrainComparison:
    quarters: list[QuarterResult]
    errors_fixed: np.ndarray
    errors_retrained: np.ndarray

    def dm(self) -> metrics.DmResult:
        return metrics.diebold_mariano(self.errors_fixed, self.errors_retrained, horizon=0)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["quarter_start", "n_pairs", "rmse_fixed", "rmse_retrained"])
            for q in self.quarters:
                writer.writerow([format_month(q.start_month), q.n_pairs,
                                 repr(q.rmse_fixed), repr(q.rmse_retrained)])


def quarterly_retrain_eval(
    dataset: panel.HierarchyDataset,
    fit_model,
    train_fraction: float = 0.7,
    min_history: int = 4,
) -> RetrainComparison:
    """Walk the test period quarter by quarter, fixed vs retrained model.

    ``fit_model(view) -> PanelModel`` fits one model on a training view. The
    fixed variant trains once on the chronological training view; the
    retrained variant refits at each quarter boundary on everything observed
    before that boundary. Both predict horizon 0 over the following quarter.
    Quarters without evaluable pairs are skipped and logged.
    """
    train_view, test_view = panel.chrono_split(dataset, train_fraction)
    test_months = sorted({int(m) for rs in test_view.rates.values() for m in rs.months})
    if not test_months:
        raise DataError("empty test period")
    fixed = fit_model(train_view)

    quarters: list[QuarterResult] = []
    all_fixed: list[float] = []
    all_retrained: list[float] = []
    start = test_months[0]
    last = test_months[-1]
    while start <= last:
        block = {m for m in range(start, start + 3)}
        relevant = block & set(test_months)
        if relevant:
            retrained = fit_model(panel.view_before(dataset, start))
            fs = horizon_eval([fixed, retrained], dataset, test_view,
                              horizons=(0,), only_months=block)
            ef, er = [], []
            for node in fs.nodes(fixed.name):
                pf = {m: (a, p) for m, a, p in fs.pairs(fixed.name, node, 0)}
                pr = {m: (a, p) for m, a, p in fs.pairs(retrained.name, node, 0)}
                for m in sorted(set(pf) & set(pr)):
                    ef.append(pf[m][0] - pf[m][1])
                    er.append(pr[m][0] - pr[m][1])
            if ef:
                quarters.append(QuarterResult(
                    start_month=start,
                    n_pairs=len(ef),
                    rmse_fixed=float(np.sqrt(np.mean(np.square(ef)))),
                    rmse_retrained=float(np.sqrt(np.mean(np.square(er)))),
                ))
                all_fixed.extend(ef)
                all_retrained.extend(er)
            else:
                logger.info("quarter starting %s: no evaluable pairs, skipped",
                            format_month(start))
        start += 3
    if not quarters:
        raise DataError("no quarter produced evaluable pairs")
    return RetrainComparison(
        quarters=quarters,
        errors_fixed=np.array(all_fixed),
        errors_retrained=np.array(all_retrained),
    )
