"""Command-line entry point.

Subcommands: ingest, stats, train, evaluate, retrain-eval, plot-data.
Exit codes: 0 success, 1 internal error, 2 user or data error. All outputs
are deterministic given the configuration and seed (no timestamps), so a
rerun reproduces every file byte for byte.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from collections import Counter

from . import baselines, evaluation, modelzoo, panel, runconfig
from .errors import TreecastError
from .months import format_month

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USER = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="treecast",
        description="Hierarchical monthly time-series forecasting toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_overrides(p):
        p.add_argument("--data", help="panel CSV (overrides run.data)")
        p.add_argument("--exog", help="exogenous CSV (overrides run.exog)")
        p.add_argument("--out", help="output directory (overrides run.out)")
        p.add_argument("--seed", type=int, help="seed (overrides run.seed)")
        p.add_argument("--train-frac", type=float, dest="train_frac",
                       help="training fraction (overrides run.train_frac)")

    p = sub.add_parser("ingest", help="validate a panel CSV and summarize it")
    p.add_argument("--data", required=True)
    p.add_argument("--out", help="write the summary to this directory")

    p = sub.add_parser("stats", help="descriptive statistics per hierarchy level")
    p.add_argument("--data", required=True)
    p.add_argument("--level", default="all",
                   help="a level number, or 'all' for every level plus the total")

    p = sub.add_parser("train", help="fit every configured model and save it")
    p.add_argument("--config", required=True)
    add_overrides(p)

    p = sub.add_parser("evaluate", help="score saved models over the test period")
    p.add_argument("--config", required=True)
    p.add_argument("--models", nargs="*", help="subset of model names to evaluate")
    add_overrides(p)

    p = sub.add_parser("retrain-eval", help="fixed vs quarterly-retrained comparison")
    p.add_argument("--config", required=True)
    add_overrides(p)

    p = sub.add_parser("plot-data", help="emit one node's actual vs predicted series")
    p.add_argument("--forecasts", required=True, help="forecasts CSV from evaluate")
    p.add_argument("--node", required=True, type=int)
    p.add_argument("--out", help="output CSV path (default: stdout)")

    return parser


def _load_config(args) -> runconfig.RunConfig:
    config = runconfig.parse_run_config(args.config)
    return runconfig.apply_overrides(
        config,
        data=args.data,
        exog=args.exog,
        out=args.out,
        seed=args.seed,
        train_frac=args.train_frac,
    )


def _write_resolved(config: runconfig.RunConfig) -> None:
    os.makedirs(config.out, exist_ok=True)
    with open(os.path.join(config.out, "run_config_resolved"), "w",
              encoding="utf-8") as fh:
        fh.write(runconfig.render_resolved(config))


def _model_path(config: runconfig.RunConfig, name: str) -> str:
    return os.path.join(config.out, "models", f"{name}.json")


def cmd_ingest(args) -> int:
    dataset = panel.parse_panel(args.data)
    levels = Counter(s.level for s in dataset.nodes.values())
    level_lo, level_hi = min(levels), max(levels)
    months = [int(m) for s in dataset.nodes.values() for m in (s.months[0], s.months[-1])]
    lines = [f"{len(dataset.nodes)} nodes, levels {level_lo}-{level_hi}"]
    for level in sorted(levels):
        lines.append(f"  level {level}: {levels[level]} nodes")
    lines.append(f"date range: {format_month(min(months))} .. {format_month(max(months))}")
    total_rates = sum(len(rs) for rs in dataset.rates.values())
    lines.append(f"total rates: {total_rates}")
    text = "\n".join(lines)
    print(text)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "ingest_summary.txt"), "w",
                  encoding="utf-8") as fh:
            fh.write(text + "\n")
    return EXIT_OK


def _stats_line(row: panel.StatsRow) -> str:
    return (f"{row.level:>5} {row.count:>8} {row.mean:>8.2f} {row.std:>8.2f} "
            f"{row.minimum:>9.2f} {row.maximum:>9.2f} {row.node_count:>7} "
            f"{row.avg_per_node:>10.2f}")


def cmd_stats(args) -> int:
    dataset = panel.parse_panel(args.data)
    header = (f"{'level':>5} {'count':>8} {'mean':>8} {'std':>8} "
              f"{'min':>9} {'max':>9} {'nodes':>7} {'avg/node':>10}")
    print(header)
    if args.level == "all":
        for level in dataset.levels_present():
            print(_stats_line(panel.descriptive_stats(dataset, level)))
        print(_stats_line(panel.descriptive_stats(dataset, None)))
    else:
        print(_stats_line(panel.descriptive_stats(dataset, int(args.level))))
    return EXIT_OK


def _prepare(config: runconfig.RunConfig):
    dataset = panel.parse_panel(config.data)
    exog = baselines.load_exog(config.exog) if config.exog else None
    train_view, test_view = panel.chrono_split(dataset, config.train_frac)
    return dataset, exog, train_view, test_view


def cmd_train(args) -> int:
    config = _load_config(args)
    dataset, exog, train_view, _ = _prepare(config)
    _write_resolved(config)
    os.makedirs(os.path.join(config.out, "models"), exist_ok=True)
    log_lines = []
    for spec in config.models:
        model = modelzoo.build_model(spec, train_view, exog)
        modelzoo.save_panel_model(model, _model_path(config, spec.name))
        covered = ("all nodes" if model.shared is not None
                   else f"{len(model.per_node)} nodes")
        log_lines.append(f"{spec.name}: kind={spec.kind} rho={spec.rho} {covered}")
        if hasattr(model, "hrnn_model_"):
            fitted = model.hrnn_model_
            for node in sorted(fitted.node_fits):
                fit = fitted.node_fits[node]
                log_lines.append(
                    f"  node {node}: tau_theta={fit.tau_theta!r} "
                    f"final_loss={fit.final_loss!r} epochs={fit.epochs_run}"
                    + (f" flags={','.join(fit.flags)}" if fit.flags else "")
                )
            for node in sorted(fitted.skipped):
                log_lines.append(f"  node {node}: skipped ({fitted.skipped[node]})")
        print(f"trained {spec.name} ({spec.kind})")
    with open(os.path.join(config.out, "train_log.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(log_lines) + "\n")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    config = _load_config(args)
    dataset, exog, _, test_view = _prepare(config)
    _write_resolved(config)
    names = args.models if args.models else [spec.name for spec in config.models]
    reference = config.reference_name()
    if reference not in names:
        names = [reference] + [n for n in names if n != reference]
    models = []
    for name in names:
        config.model(name)  # unknown names are user errors
        models.append(modelzoo.load_panel_model(_model_path(config, name),
                                                dataset=dataset, exog=exog))
    forecasts = evaluation.horizon_eval(models, dataset, test_view,
                                        horizons=config.horizons)
    forecasts.to_csv(os.path.join(config.out, "forecasts.csv"))
    all_rows = []
    texts = []
    for grouping in config.groupings:
        report = evaluation.aggregate(forecasts, dataset, grouping, reference)
        all_rows.extend(report.rows)
        texts.append(report.to_text())
    combined = evaluation.EvalReport(reference=reference, rows=all_rows)
    combined.to_csv(os.path.join(config.out, "report.csv"))
    with open(os.path.join(config.out, "report.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(texts))
    print(f"evaluated {len(models)} models; reports in {config.out}")
    return EXIT_OK


def cmd_retrain_eval(args) -> int:
    config = _load_config(args)
    dataset, exog, _, _ = _prepare(config)
    _write_resolved(config)
    name = config.retrain_model
    if name is None:
        hrnn_specs = [s for s in config.models if s.kind == "hrnn"]
        if not hrnn_specs:
            raise TreecastError("retrain-eval needs a hrnn model "
                                "(or run.retrain_model)")
        name = hrnn_specs[0].name
    spec = config.model(name)

    def fit_model(view):
        return modelzoo.build_model(spec, view, exog)

    comparison = evaluation.quarterly_retrain_eval(
        dataset, fit_model, train_fraction=config.train_frac,
        min_history=spec.rho,
    )
    comparison.to_csv(os.path.join(config.out, "retrain_quarters.csv"))
    dm = comparison.dm()
    print(f"{len(comparison.quarters)} quarters; "
          f"DM statistic {dm.statistic:.3f}, p = {dm.p_value:.4f}")
    return EXIT_OK


def cmd_plot_data(args) -> int:
    forecasts = evaluation.ForecastSet.from_csv(args.forecasts)
    node = args.node
    models = [m for m in forecasts.models() if forecasts.pairs(m, node, 0)]
    if not models:
        raise TreecastError(f"node {node} not present in {args.forecasts}")
    series = {m: dict((mo, (a, p)) for mo, a, p in forecasts.pairs(m, node, 0))
              for m in models}
    months = sorted(set().union(*(set(s) for s in series.values())))
    rows = []
    for month in months:
        actuals = [series[m][month][0] for m in models if month in series[m]]
        row = [format_month(month), repr(actuals[0])]
        for m in models:
            row.append(repr(series[m][month][1]) if month in series[m] else "")
        rows.append(row)
    header = ["month", "actual"] + models
    if args.out:
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows(rows)
    else:
        writer = csv.writer(sys.stdout)
        writer.writerow(header)
        writer.writerows(rows)
    return EXIT_OK


_COMMANDS = {
    "ingest": cmd_ingest,
    "stats": cmd_stats,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "retrain-eval": cmd_retrain_eval,
    "plot-data": cmd_plot_data,
}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except TreecastError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    except (ValueError, KeyError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    except Exception as exc:  # pragma: no cover - internal failures
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
