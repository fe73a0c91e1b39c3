"""Table writers, trace reader and run manifests.

Floats are written with ``repr`` so a value read back is bit-identical to the
value written. Missing values are empty cells in CSV and ``null`` in JSON lines.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

SCHEMA_VERSION = 1
MANIFEST_NAME = "manifest.json"


class TraceFormatError(ValueError):
    pass


def _plain(v):
    if v is None:
        return None
    if isinstance(v, Enum):
        return v.value
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return None if math.isnan(v) else v
    return v


def _cell(v) -> str:
    v = _plain(v)
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_table(
    out_dir: Path, stem: str, columns: Sequence[str], rows: Iterable[Sequence], fmt: str = "csv"
) -> Path:
    """Write rows as ``<stem>.csv`` or ``<stem>.jsonl``; return the path."""
    out_dir = Path(out_dir)
    if fmt == "csv":
        path = out_dir / f"{stem}.csv"
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(columns)
            for row in rows:
                w.writerow([_cell(v) for v in row])
    elif fmt == "jsonl":
        path = out_dir / f"{stem}.jsonl"
        with path.open("w") as fh:
            for row in rows:
                rec = {c: _plain(v) for c, v in zip(columns, row)}
                fh.write(json.dumps(rec, allow_nan=False) + "\n")
    else:
        raise ValueError(f"unknown table format {fmt!r}")
    return path


def write_json(path: Path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n")
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    return _plain(obj)


def sha256(path: Path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(
    out_dir: Path,
    command: str,
    config: dict,
    master_seed: int,
    outputs: Sequence[Path],
    wall_clock_seconds: float,
    version: str,
    extra: Optional[dict] = None,
) -> Path:
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "artifact_version": version,
        "master_seed": master_seed,
        "config": config,
        "outputs": {Path(p).name: sha256(p) for p in outputs},
        "wall_clock_seconds": wall_clock_seconds,
    }
    if extra:
        manifest.update(extra)
    return write_json(Path(out_dir) / MANIFEST_NAME, manifest)


def verify_manifest(out_dir: Path) -> dict[str, bool]:
    """Recompute checksums of every output listed in the manifest."""
    out_dir = Path(out_dir)
    manifest = json.loads((out_dir / MANIFEST_NAME).read_text())
    result = {}
    for name, digest in manifest["outputs"].items():
        p = out_dir / name
        result[name] = p.is_file() and sha256(p) == digest
    return result


def read_series(path: Path, column: str = "epsilon") -> np.ndarray:
    """Read one numeric column from a CSV or JSON-lines trace.

    Errors name the file and the 1-based line number. Empty cells and nulls are
    rejected, since the diagnostics need a complete series.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"trace file not found: {path}")
    values = []
    with path.open() as fh:
        if path.suffix == ".jsonl":
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise TraceFormatError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
                if not isinstance(rec, dict) or column not in rec:
                    raise TraceFormatError(f"{path}:{lineno}: missing field {column!r}")
                values.append(_to_float(rec[column], path, lineno))
        else:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None:
                raise TraceFormatError(f"{path}:1: empty file")
            if column not in header:
                raise TraceFormatError(f"{path}:1: header has no column {column!r}")
            k = header.index(column)
            for row in reader:
                lineno = reader.line_num
                if not row:
                    continue
                if len(row) != len(header):
                    raise TraceFormatError(
                        f"{path}:{lineno}: expected {len(header)} fields, found {len(row)}"
                    )
                values.append(_to_float(row[k], path, lineno))
    return np.array(values)


def _to_float(v, path, lineno) -> float:
    try:
        x = float(v)
    except (TypeError, ValueError):
        raise TraceFormatError(f"{path}:{lineno}: value {v!r} is not a number") from None
    if not math.isfinite(x):
        raise TraceFormatError(f"{path}:{lineno}: non-finite value {v!r}")
    return x
