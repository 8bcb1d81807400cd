"""Deterministic file output: JSON, CSV, and run manifests.

Numbers are serialized with Python's shortest round-trip repr and files end
with a single newline, so byte-identical reruns are a meaningful contract.
No output contains wall-clock information.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

__all__ = [
    "jsonable",
    "write_json",
    "write_csv",
    "git_blob_sha1",
    "write_manifest",
]


def jsonable(obj):
    """Recursively convert numpy scalars/arrays and dataclass-likes to JSON types."""
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if hasattr(obj, "to_jsonable"):
        return jsonable(obj.to_jsonable())
    return obj


def write_json(path, obj) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def write_csv(path, rows, columns=None) -> None:
    """Write dict rows with a fixed column order and period decimals."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = list(rows)
    if columns is None:
        columns = list(rows[0].keys()) if rows else []
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_cell(row[c]) for c in columns) + "\n")


def git_blob_sha1(data: bytes) -> str:
    """Content hash in git blob form: sha1('blob <len>\\0' + data)."""
    h = hashlib.sha1()
    h.update(b"blob %d\x00" % len(data))
    h.update(data)
    return h.hexdigest()


def write_manifest(out_dir, command: str, config: dict, scenario_bytes: bytes) -> None:
    from . import __version__

    write_json(
        Path(out_dir) / "manifest.json",
        {
            "command": command,
            "config": config,
            "scenario_sha1": git_blob_sha1(scenario_bytes),
            "package_version": __version__,
        },
    )
