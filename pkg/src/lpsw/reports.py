"""Schema-versioned JSON reports and CSV companions, written atomically.

A report file has three keys: ``schema_version``, ``kind`` and ``report``
(the deterministic payload), plus ``metadata`` holding the only
nondeterministic content (creation time, package version).  Two runs with the
same configuration and seed produce identical files once ``metadata`` is
dropped.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .errors import LpswError

SCHEMA_VERSION = 1


class ReportExistsError(LpswError):
    pass


def to_jsonable(obj):
    """Plain JSON types; infinities become the string "inf", NaN becomes null."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return None
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if hasattr(obj, "to_dict"):
        return to_jsonable(obj.to_dict())
    if obj is None or isinstance(obj, str):
        return obj
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _atomic_write(path: Path, data: str, force: bool) -> None:
    path = Path(path)
    if path.exists() and not force:
        raise ReportExistsError(f"{path} exists; rerun with --force to overwrite")
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except OSError as exc:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise LpswError(f"cannot write {path}: {exc}") from exc


def dumps_report(kind: str, payload, timestamp: bool = True) -> str:
    from . import __version__

    doc = {"schema_version": SCHEMA_VERSION, "kind": kind, "report": to_jsonable(payload)}
    if timestamp:
        doc["metadata"] = {
            "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
            "package_version": __version__,
        }
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"


def emit_report(path, kind: str, payload, force: bool = False, timestamp: bool = True) -> Path:
    path = Path(path)
    _atomic_write(path, dumps_report(kind, payload, timestamp), force)
    return path


def load_report(path) -> dict:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise LpswError(f"cannot read report {path}: {exc}") from exc
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise LpswError(f"{path}: unsupported schema version {doc.get('schema_version')!r}")
    return doc


def strip_metadata(doc: dict) -> dict:
    return {k: v for k, v in doc.items() if k != "metadata"}


def _cell(v):
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else ("inf" if v > 0 else ("-inf" if v < 0 else "nan"))
    if v is None:
        return ""
    return v


def emit_csv(path, header, rows, force: bool = False) -> Path:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    path = Path(path)
    _atomic_write(path, buf.getvalue(), force)
    return path


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]
