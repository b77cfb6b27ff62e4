"""Declarative run configuration.

One INI file describes a whole run: a ``[run]`` section with the data paths
and evaluation settings, plus one ``[model.<name>]`` section per model.
Unknown keys are rejected. Command-line flags override run keys one-to-one,
and every command echoes its fully resolved configuration next to its
outputs so a run can be reproduced from the artifact alone.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, fields, replace

from .errors import DataError
from .modelzoo import ModelSpec

RUN_KEYS = {"data", "exog", "out", "train_frac", "horizons", "grouping", "seed",
            "reference", "retrain_model"}

_COMMON_MODEL_KEYS = {"kind", "rho", "seed"}
_MODEL_KEYS = {
    "ar": set(),
    "phillips": set(),
    "var": set(),
    "rw": set(),
    "ar_gap": set(),
    "lstar": {"c", "gamma"},
    "fc": {"hidden", "learning_rate", "epochs", "batch_size"},
    "s_gru": {"learning_rate", "epochs", "batch_size"},
    "i_gru": {"learning_rate", "epochs", "batch_size"},
    "knn_gru": {"k", "learning_rate", "epochs", "batch_size"},
    "hrnn": {"alpha", "learning_rate", "epochs", "batch_size"},
}

_INT_KEYS = {"rho", "seed", "k", "hidden", "epochs", "batch_size"}
_FLOAT_KEYS = {"alpha", "c", "gamma", "learning_rate"}


@dataclass(frozen=True)
class RunConfig:
    data: str
    out: str
    exog: str | None = None
    train_frac: float = 0.7
    horizons: tuple[int, ...] = (0, 1, 2, 3, 4, 8)
    groupings: tuple[str, ...] = ("all", "level", "sector")
    seed: int = 0
    reference: str | None = None
    retrain_model: str | None = None
    models: tuple[ModelSpec, ...] = ()

    def model(self, name: str) -> ModelSpec:
        for spec in self.models:
            if spec.name == name:
                return spec
        raise KeyError(f"no model named {name!r} in the configuration")

    def reference_name(self) -> str:
        """The normalization model: explicit, else the first AR with rho = 1."""
        if self.reference is not None:
            return self.reference
        for spec in self.models:
            if spec.kind == "ar" and spec.rho == 1:
                return spec.name
        raise DataError("no reference model: add an ar model with rho = 1 "
                        "or set run.reference")


def _parse_value(key: str, raw: str):
    if key in _INT_KEYS:
        return int(raw)
    if key in _FLOAT_KEYS:
        return float(raw)
    return raw


def parse_run_config(path) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None)
    with open(path, encoding="utf-8") as fh:
        parser.read_file(fh)

    if not parser.has_section("run"):
        raise DataError("configuration needs a [run] section")
    run = dict(parser.items("run"))
    unknown = set(run) - RUN_KEYS
    if unknown:
        raise DataError(f"unknown [run] keys: {sorted(unknown)}")
    if "data" not in run:
        raise DataError("run.data is required")
    if "out" not in run:
        raise DataError("run.out is required")

    seed = int(run.get("seed", "0"))
    horizons = tuple(int(h) for h in run.get("horizons", "0,1,2,3,4,8").split(","))
    groupings = tuple(g.strip() for g in run.get("grouping", "all,level,sector").split(","))
    for g in groupings:
        if g not in ("all", "level", "sector"):
            raise DataError(f"unknown grouping {g!r}")

    models = []
    for section in parser.sections():
        if section == "run":
            continue
        if not section.startswith("model."):
            raise DataError(f"unknown section [{section}]")
        name = section[len("model."):]
        entries = dict(parser.items(section))
        if "kind" not in entries:
            raise DataError(f"[{section}] needs a kind")
        kind = entries["kind"]
        if kind not in _MODEL_KEYS:
            raise DataError(f"[{section}]: unknown kind {kind!r}")
        allowed = _COMMON_MODEL_KEYS | _MODEL_KEYS[kind]
        unknown = set(entries) - allowed
        if unknown:
            raise DataError(f"[{section}]: unknown keys {sorted(unknown)} for kind {kind}")
        kwargs = {k: _parse_value(k, v) for k, v in entries.items() if k != "kind"}
        kwargs.setdefault("seed", seed)
        models.append(ModelSpec(name=name, kind=kind, **kwargs))
    if not models:
        raise DataError("configuration defines no [model.*] sections")

    return RunConfig(
        data=run["data"],
        out=run["out"],
        exog=run.get("exog"),
        train_frac=float(run.get("train_frac", "0.7")),
        horizons=horizons,
        groupings=groupings,
        seed=seed,
        reference=run.get("reference"),
        retrain_model=run.get("retrain_model"),
        models=tuple(models),
    )


def apply_overrides(config: RunConfig, *, data=None, exog=None, out=None,
                    seed=None, train_frac=None) -> RunConfig:
    """Command-line flags override run keys one-to-one."""
    updates = {}
    if data is not None:
        updates["data"] = data
    if exog is not None:
        updates["exog"] = exog
    if out is not None:
        updates["out"] = out
    if train_frac is not None:
        updates["train_frac"] = train_frac
    if seed is not None:
        updates["seed"] = seed
        updates["models"] = tuple(replace(m, seed=seed) for m in config.models)
    return replace(config, **updates)


def render_resolved(config: RunConfig) -> str:
    """Canonical INI text of the fully resolved configuration."""
    out = io.StringIO()
    out.write("[run]\n")
    out.write(f"data = {config.data}\n")
    if config.exog is not None:
        out.write(f"exog = {config.exog}\n")
    out.write(f"out = {config.out}\n")
    out.write(f"train_frac = {config.train_frac!r}\n")
    out.write(f"horizons = {','.join(str(h) for h in config.horizons)}\n")
    out.write(f"grouping = {','.join(config.groupings)}\n")
    out.write(f"seed = {config.seed}\n")
    out.write(f"reference = {config.reference_name()}\n")
    if config.retrain_model is not None:
        out.write(f"retrain_model = {config.retrain_model}\n")
    for spec in config.models:
        out.write(f"\n[model.{spec.name}]\n")
        for f in fields(ModelSpec):
            if f.name == "name":
                continue
            value = getattr(spec, f.name)
            out.write(f"{f.name} = {value!r}\n" if isinstance(value, float)
                      else f"{f.name} = {value}\n")
    return out.getvalue()
