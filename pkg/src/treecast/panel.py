"""Hierarchical monthly index panel.

Ingests a normalized CSV of index levels organized as a single-rooted tree,
derives monthly log-change rates, splits each node's rate series
chronologically, and answers the hierarchy/correlation queries every model in
this package builds on.

A dataset is immutable after construction; all queries are read-only.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import metrics
from .errors import DataError, HierarchyError, PanelFormatError
from .months import format_month, parse_month

logger = logging.getLogger(__name__)

# Correlations over fewer overlapping training months than this are noise and
# are treated as 0 (neutral coupling).
MIN_OVERLAP_MONTHS = 12
# Nodes with fewer training rates than this are flagged untrainable.
MIN_TRAIN_RATES = 24

CSV_COLUMNS = ["node_id", "node_name", "level", "parent_id", "month", "index_value"]
MAX_LEVEL = 8


def contiguous_runs(months: np.ndarray) -> list[slice]:
    """Slices of maximal runs of consecutive month indexes."""
    if len(months) == 0:
        return []
    breaks = np.flatnonzero(np.diff(months) != 1)
    starts = np.concatenate(([0], breaks + 1))
    stops = np.concatenate((breaks + 1, [len(months)]))
    return [slice(int(a), int(b)) for a, b in zip(starts, stops)]


@dataclass(frozen=True)
class IndexSeries:
    """One node's monthly index levels. Values are strictly positive."""

    node: int
    name: str
    level: int
    months: np.ndarray  # int month indexes, strictly increasing
    values: np.ndarray  # same length, > 0

    def __len__(self) -> int:
        return len(self.months)


@dataclass(frozen=True)
class RateSeries:
    """Monthly log-change rates, 100 * ln(x_t / x_{t-1}).

    ``months[i]`` is the month of the *later* observation of pair i. A rate
    exists only for two index observations one calendar month apart.
    """

    node: int
    months: np.ndarray
    rates: np.ndarray

    def __len__(self) -> int:
        return len(self.months)

    def runs(self) -> list[slice]:
        return contiguous_runs(self.months)


def log_change(series: IndexSeries) -> RateSeries:
    """Derive the rate series of one index series.

    Months separated by a gap produce no rate; series shorter than two
    observations produce an empty rate series.
    """
    if np.any(series.values <= 0):
        raise ValueError(f"node {series.node}: index values must be positive")
    months_out: list[np.ndarray] = []
    rates_out: list[np.ndarray] = []
    for run in contiguous_runs(series.months):
        vals = series.values[run]
        if len(vals) < 2:
            continue
        months_out.append(series.months[run][1:])
        rates_out.append(100.0 * np.log(vals[1:] / vals[:-1]))
    if not months_out:
        return RateSeries(series.node, np.empty(0, dtype=int), np.empty(0))
    return RateSeries(
        series.node,
        np.concatenate(months_out),
        np.concatenate(rates_out),
    )


@dataclass(frozen=True)
class HierarchyDataset:
    """The full panel: per-node index series, tree structure, derived rates."""

    nodes: dict[int, IndexSeries]
    parents: dict[int, int]  # child -> parent; the root is absent
    root: int
    sectors: dict[int, int]  # node -> ancestor directly under the root
    rates: dict[int, RateSeries]

    @property
    def node_ids(self) -> list[int]:
        return sorted(self.nodes)

    def name(self, node: int) -> str:
        return self.nodes[node].name

    def level(self, node: int) -> int:
        return self.nodes[node].level

    def children(self, node: int) -> list[int]:
        return sorted(c for c, p in self.parents.items() if p == node)

    def levels_present(self) -> list[int]:
        return sorted({s.level for s in self.nodes.values()})

    def rate_view(self) -> "PanelView":
        return PanelView(self, dict(self.rates))


@dataclass(frozen=True)
class SplitSpec:
    """Chronological split: per node, every training month precedes testing."""

    train_fraction: float
    boundaries: dict[int, int | None]  # node -> first test month, None if no test rates


@dataclass(frozen=True)
class PanelView:
    """A read-only restriction of a dataset to a subset of each node's rates."""

    dataset: HierarchyDataset
    rates: dict[int, RateSeries]
    spec: SplitSpec | None = None

    @property
    def node_ids(self) -> list[int]:
        return sorted(self.rates)

    def node_rates(self, node: int) -> RateSeries:
        return self.rates[node]

    def trainable_nodes(self, min_rates: int = MIN_TRAIN_RATES) -> list[int]:
        return [n for n in self.node_ids if len(self.rates[n]) >= min_rates]

    def untrainable_nodes(self, min_rates: int = MIN_TRAIN_RATES) -> list[int]:
        return [n for n in self.node_ids if len(self.rates[n]) < min_rates]


def _parse_row(line_no: int, row: dict[str, str]):
    try:
        node = int(row["node_id"])
    except ValueError:
        raise PanelFormatError(line_no, f"node_id {row['node_id']!r} is not an integer")
    if node < 0:
        raise PanelFormatError(line_no, f"node_id {node} is negative")
    try:
        level = int(row["level"])
    except ValueError:
        raise PanelFormatError(line_no, f"level {row['level']!r} is not an integer")
    if not 0 <= level <= MAX_LEVEL:
        raise PanelFormatError(line_no, f"level {level} outside 0..{MAX_LEVEL}")
    parent_text = row["parent_id"].strip()
    if parent_text == "":
        parent: int | None = None
    else:
        try:
            parent = int(parent_text)
        except ValueError:
            raise PanelFormatError(line_no, f"parent_id {parent_text!r} is not an integer")
    try:
        month = parse_month(row["month"])
    except ValueError as exc:
        raise PanelFormatError(line_no, str(exc))
    try:
        value = float(row["index_value"])
    except ValueError:
        raise PanelFormatError(line_no, f"index_value {row['index_value']!r} is not a number")
    if not math.isfinite(value) or value <= 0.0:
        raise PanelFormatError(line_no, f"index_value {value!r} is not a positive number")
    return node, row["node_name"], level, parent, month, value


def parse_panel(path) -> HierarchyDataset:
    """Parse the panel CSV and build a validated dataset.

    Schema: header exactly ``node_id,node_name,level,parent_id,month,index_value``,
    one row per (node, month), ``month`` as YYYY-MM, empty ``parent_id`` on the
    root rows only. When a node's name/level/parent differ across rows, the
    assignment on its most recent month wins.
    """
    per_node: dict[int, dict[int, float]] = {}
    meta: dict[int, tuple[int, str, int, int | None]] = {}  # node -> (month, name, level, parent)

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise PanelFormatError(1, "empty file, expected a header row")
        if [h.strip() for h in header] != CSV_COLUMNS:
            raise PanelFormatError(1, f"bad header {header!r}, expected {','.join(CSV_COLUMNS)}")
        for line_no, raw in enumerate(reader, start=2):
            if not raw or (len(raw) == 1 and raw[0].strip() == ""):
                continue
            if len(raw) != len(CSV_COLUMNS):
                raise PanelFormatError(line_no, f"expected {len(CSV_COLUMNS)} fields, got {len(raw)}")
            node, name, level, parent, month, value = _parse_row(
                line_no, dict(zip(CSV_COLUMNS, raw))
            )
            obs = per_node.setdefault(node, {})
            if month in obs:
                raise PanelFormatError(
                    line_no, f"duplicate row for node {node}, month {format_month(month)}"
                )
            obs[month] = value
            if node not in meta or month >= meta[node][0]:
                meta[node] = (month, name, level, parent)

    if not per_node:
        raise PanelFormatError(1, "no data rows")

    nodes: dict[int, IndexSeries] = {}
    parents: dict[int, int] = {}
    roots: list[int] = []
    for node, obs in per_node.items():
        months = np.array(sorted(obs), dtype=int)
        values = np.array([obs[m] for m in months], dtype=float)
        _, name, level, parent = meta[node]
        nodes[node] = IndexSeries(node, name, level, months, values)
        if parent is None:
            roots.append(node)
        else:
            parents[node] = parent

    if len(roots) != 1:
        raise HierarchyError(
            f"expected exactly one root (empty parent_id), found {len(roots)}: {sorted(roots)}"
        )
    root = roots[0]

    for child, parent in parents.items():
        if parent not in nodes:
            raise HierarchyError(f"node {child} references missing parent {parent}")

    # Walk every parent chain; anything that does not reach the root is a cycle.
    state: dict[int, int] = {}  # 0 in-progress, 1 done
    for start in nodes:
        chain = []
        n = start
        while n != root and state.get(n) != 1:
            if state.get(n) == 0:
                cycle = chain[chain.index(n):] + [n]
                raise HierarchyError(
                    "cyclic parent links: " + " -> ".join(str(c) for c in cycle)
                )
            state[n] = 0
            chain.append(n)
            n = parents[n]
        for c in chain:
            state[c] = 1

    sectors: dict[int, int] = {}
    for node in nodes:
        if node == root:
            continue
        n = node
        while parents[n] != root:
            n = parents[n]
        sectors[node] = n

    rates = {node: log_change(series) for node, series in nodes.items()}
    return HierarchyDataset(nodes, parents, root, sectors, rates)


def chrono_split(dataset: HierarchyDataset, fraction: float = 0.7) -> tuple[PanelView, PanelView]:
    """Split each node's rates into an early training view and a late test view.

    Per node, the earliest ``floor(fraction * len)`` rates go to train and the
    rest to test. Node membership is identical in both views.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must be in (0, 1), got {fraction}")
    train: dict[int, RateSeries] = {}
    test: dict[int, RateSeries] = {}
    boundaries: dict[int, int | None] = {}
    for node, rs in dataset.rates.items():
        k = int(math.floor(fraction * len(rs)))
        train[node] = RateSeries(node, rs.months[:k], rs.rates[:k])
        test[node] = RateSeries(node, rs.months[k:], rs.rates[k:])
        boundaries[node] = int(rs.months[k]) if k < len(rs) else None
    spec = SplitSpec(fraction, boundaries)
    return PanelView(dataset, train, spec), PanelView(dataset, test, spec)


def view_before(dataset: HierarchyDataset, month: int) -> PanelView:
    """View of every node's rates strictly before ``month`` (walk-forward cuts)."""
    sliced = {}
    for node, rs in dataset.rates.items():
        keep = rs.months < month
        sliced[node] = RateSeries(node, rs.months[keep], rs.rates[keep])
    return PanelView(dataset, sliced)


def _overlap_correlation(a: RateSeries, b: RateSeries) -> tuple[float, int]:
    """Pearson correlation over the two series' shared months."""
    common, ia, ib = np.intersect1d(a.months, b.months, return_indices=True)
    n = len(common)
    if n < 2:
        return 0.0, n
    r = metrics.pearson(a.rates[ia], b.rates[ib])
    if math.isnan(r):
        return 0.0, n
    return r, n


def parent_correlation(view: PanelView, node: int) -> float:
    """Correlation between a node's and its parent's rates in this view.

    Returns 0 when the overlap is shorter than ``MIN_OVERLAP_MONTHS``.
    """
    ds = view.dataset
    if node == ds.root:
        raise ValueError(f"node {node} is the root and has no parent")
    if node not in ds.parents:
        raise KeyError(f"unknown node {node}")
    corr, n = _overlap_correlation(view.rates[node], view.rates[ds.parents[node]])
    if n < MIN_OVERLAP_MONTHS:
        return 0.0
    return corr


def knn_neighbors(view: PanelView, node: int, k: int) -> list[int]:
    """The k nodes most correlated with ``node`` over this view's rates.

    Only nodes with at least ``MIN_OVERLAP_MONTHS`` overlapping months are
    eligible; ties break toward the smaller node id and the query node is
    never returned. If fewer than k nodes are eligible, all of them are
    returned and a warning is logged.
    """
    if k < 0:
        raise ValueError("k must be nonnegative")
    if node not in view.rates:
        raise KeyError(f"unknown node {node}")
    if k == 0:
        return []
    own = view.rates[node]
    scored: list[tuple[float, int]] = []
    for other in view.node_ids:
        if other == node:
            continue
        corr, n = _overlap_correlation(own, view.rates[other])
        if n < MIN_OVERLAP_MONTHS:
            continue
        scored.append((corr, other))
    scored.sort(key=lambda t: (-t[0], t[1]))
    picked = [other for _, other in scored[:k]]
    if len(picked) < k:
        logger.warning(
            "node %d: only %d of %d requested neighbors eligible", node, len(picked), k
        )
    return picked


@dataclass(frozen=True)
class StatsRow:
    """One row of the descriptive-statistics table (population std)."""

    level: str
    count: int
    mean: float
    std: float
    minimum: float
    maximum: float
    node_count: int
    avg_per_node: float


def descriptive_stats(dataset: HierarchyDataset, level: int | None = None) -> StatsRow:
    """Statistics over all rates at one level, or over the full hierarchy."""
    if level is None:
        node_ids = dataset.node_ids
        label = "all"
    else:
        node_ids = [n for n in dataset.node_ids if dataset.level(n) == level]
        label = str(level)
    pooled = [dataset.rates[n].rates for n in node_ids if len(dataset.rates[n]) > 0]
    if not pooled:
        raise DataError(f"no rates at level {label}")
    rates = np.concatenate(pooled)
    n_nodes = len(node_ids)
    return StatsRow(
        level=label,
        count=len(rates),
        mean=float(rates.mean()),
        std=float(rates.std()),  # population convention
        minimum=float(rates.min()),
        maximum=float(rates.max()),
        node_count=n_nodes,
        avg_per_node=float(len(rates) / n_nodes),
    )
