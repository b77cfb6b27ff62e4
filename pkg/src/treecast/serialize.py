"""Versioned JSON records for fitted models.

Every model file starts with a magic token and a format version; unknown
versions and corrupt files are rejected with :class:`ModelIOError`. Floats
are written with ``repr`` precision, so a save/load cycle round-trips
bit-exactly and repeated saves of the same model are byte-identical.
"""

from __future__ import annotations

import json
import os

from .errors import ModelIOError

MAGIC = "treecast-model"
FORMAT_VERSION = 1


def save_bundle(path, *, kind: str, state: dict) -> None:
    record = {
        "magic": MAGIC,
        "version": FORMAT_VERSION,
        "kind": kind,
        "state": state,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(record, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_bundle(path, expected_kind: str | None = None) -> tuple[str, dict]:
    if not os.path.exists(path):
        raise ModelIOError(f"model file not found: {path}")
    try:
        with open(path, encoding="utf-8") as fh:
            record = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ModelIOError(f"corrupt model file {path}: {exc}") from exc
    if not isinstance(record, dict) or record.get("magic") != MAGIC:
        raise ModelIOError(f"{path} is not a model file (bad magic)")
    if record.get("version") != FORMAT_VERSION:
        raise ModelIOError(
            f"{path}: unsupported format version {record.get('version')!r}, "
            f"expected {FORMAT_VERSION}"
        )
    kind = record.get("kind")
    if expected_kind is not None and kind != expected_kind:
        raise ModelIOError(f"{path}: expected a {expected_kind!r} model, found {kind!r}")
    return kind, record["state"]
