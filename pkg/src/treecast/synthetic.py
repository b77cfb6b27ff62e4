"""Seeded synthetic panels for fixtures, experiments, and benchmarks.

Rate processes are generated first (an AR(1) root with noisy linear children),
then converted to positive index levels by compounding from 100, so parsing
the written CSV and re-deriving rates recovers the generated processes.
"""

from __future__ import annotations

import csv

import numpy as np

from .months import format_month, parse_month


def ar1_series(n: int, phi: float, sigma: float, intercept: float = 0.0,
               rng: np.random.Generator | None = None) -> np.ndarray:
    """A stationary AR(1) draw started from its marginal distribution."""
    rng = rng or np.random.default_rng(0)
    x = np.empty(n)
    mean = intercept / (1.0 - phi) if abs(phi) < 1 else 0.0
    scale = sigma / np.sqrt(1.0 - phi**2) if abs(phi) < 1 else sigma
    x[0] = mean + scale * rng.standard_normal()
    for t in range(1, n):
        x[t] = intercept + phi * x[t - 1] + sigma * rng.standard_normal()
    return x


def rates_to_rows(node_id: int, name: str, level: int, parent_id: int | None,
                  rate_months: np.ndarray, rates: np.ndarray,
                  base_value: float = 100.0) -> list[tuple]:
    """Panel CSV rows whose derived log-change rates equal ``rates``."""
    parent_text = "" if parent_id is None else str(parent_id)
    first_month = int(rate_months[0]) - 1
    rows = [(node_id, name, level, parent_text, format_month(first_month),
             repr(base_value))]
    value = base_value
    for month, rate in zip(rate_months, rates):
        value *= float(np.exp(rate / 100.0))
        rows.append((node_id, name, level, parent_text,
                     format_month(int(month)), repr(value)))
    return rows


def write_panel_csv(rows: list[tuple], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["node_id", "node_name", "level", "parent_id", "month",
                         "index_value"])
        writer.writerows(rows)


def coupled_tree_rows(
    *,
    seed: int,
    n_root_rates: int = 300,
    branching: tuple[int, ...] = (4, 4),
    loading: float = 0.8,
    noise_sigma: float | tuple[float, ...] = 0.2,
    root_phi: float = 0.7,
    root_sigma: float = 0.25,
    child_rates: int | None = None,
    start_month: str = "1994-01",
) -> list[tuple]:
    """A tree whose children are noisy linear copies of their parents.

    The root rate series is AR(1); each child's rate is
    ``loading * parent_rate + Gaussian noise``. ``noise_sigma`` may be one
    value or one per depth. ``child_rates`` truncates every non-root node to
    its most recent that-many rates (shorter history down the tree, like a
    real panel). Node ids are assigned breadth-first, root = 0.
    """
    m0 = parse_month(start_month)
    root_months = np.arange(m0 + 1, m0 + 1 + n_root_rates)
    rng = np.random.default_rng(seed)
    root = ar1_series(n_root_rates, root_phi, root_sigma, rng=rng)
    if isinstance(noise_sigma, (int, float)):
        noise_sigma = (float(noise_sigma),) * len(branching)
    if len(noise_sigma) != len(branching):
        raise ValueError("need one noise level per depth")

    rows = rates_to_rows(0, "total", 0, None, root_months, root)
    next_id = 1
    current = [(0, root)]
    for depth, width in enumerate(branching, start=1):
        sigma = noise_sigma[depth - 1]
        new_level = []
        for parent_id, parent_rates in current:
            for j in range(width):
                node_id = next_id
                next_id += 1
                child_rng = np.random.default_rng([seed, node_id])
                child = loading * parent_rates + sigma * child_rng.standard_normal(
                    len(parent_rates)
                )
                keep = len(child) if child_rates is None else min(child_rates, len(child))
                months = root_months[-keep:]
                name = f"n{node_id}-of-{parent_id}"
                rows.extend(rates_to_rows(node_id, name, depth, parent_id,
                                          months, child[-keep:]))
                new_level.append((node_id, child))
        current = new_level
    return rows


def fixture12_rows(seed: int = 12) -> list[tuple]:
    """The bundled 12-node fixture: root, 3 sectors, 8 leaves, mixed lengths."""
    m0 = parse_month("2000-01")
    n_root = 120
    months = np.arange(m0 + 1, m0 + 1 + n_root)
    rng = np.random.default_rng(seed)
    root = ar1_series(n_root, 0.7, 0.3, rng=rng)
    rows = rates_to_rows(0, "total", 0, None, months, root)

    sectors = [(1, "goods", 100), (2, "services", 100), (3, "energy", 96)]
    sector_rates = {}
    for node_id, name, keep in sectors:
        child_rng = np.random.default_rng([seed, node_id])
        r = 0.8 * root + 0.2 * child_rng.standard_normal(n_root)
        sector_rates[node_id] = r
        rows.extend(rates_to_rows(node_id, name, 1, 0, months[-keep:], r[-keep:]))

    leaves = [
        (4, 1, 90), (5, 1, 80), (6, 1, 60),
        (7, 2, 90), (8, 2, 72), (9, 2, 60),
        (10, 3, 84), (11, 3, 66),
    ]
    for node_id, parent, keep in leaves:
        child_rng = np.random.default_rng([seed, node_id])
        r = 0.8 * sector_rates[parent] + 0.25 * child_rng.standard_normal(n_root)
        rows.extend(rates_to_rows(node_id, f"item-{node_id}", 2, parent,
                                  months[-keep:], r[-keep:]))
    return rows
