"""Point-cloud files (CSV and ASCII PLY) and JSON reports."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from ..errors import CloudFormatError
from .datasets import PointCloud

FORMATS = ("csv", "ply")


def _float_row(cells, row):
    try:
        return [float(c) for c in cells]
    except ValueError as exc:
        raise CloudFormatError(f"non-numeric value ({exc})", row=row) from None


def _read_csv(path):
    rows = []
    with open(path, newline="") as fh:
        for i, cells in enumerate(csv.reader(fh), start=1):
            cells = [c.strip() for c in cells]
            if not cells or all(c == "" for c in cells):
                continue
            if i == 1 and not rows:
                try:
                    [float(c) for c in cells]
                except ValueError:
                    continue  # header
            vals = _float_row(cells, i)
            if rows and len(vals) != len(rows[0]):
                raise CloudFormatError(f"expected {len(rows[0])} values, found {len(vals)}", row=i)
            rows.append(vals)
    if not rows:
        raise CloudFormatError("no data rows")
    return np.asarray(rows, dtype=float)


def _read_ply(path):
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != "ply":
        raise CloudFormatError("missing 'ply' magic line", row=1)
    n_vert, props, in_vertex, body = None, [], False, None
    for i, line in enumerate(lines[1:], start=2):
        tok = line.split()
        if not tok or tok[0] in ("comment", "obj_info"):
            continue
        if tok[0] == "format":
            if len(tok) < 2 or tok[1] != "ascii":
                raise CloudFormatError("only ASCII PLY files are supported", row=i)
        elif tok[0] == "element":
            in_vertex = len(tok) == 3 and tok[1] == "vertex"
            if in_vertex:
                try:
                    n_vert = int(tok[2])
                except ValueError:
                    raise CloudFormatError("bad vertex count", row=i) from None
            elif n_vert is None:
                raise CloudFormatError("vertex element must come first", row=i)
        elif tok[0] == "property" and in_vertex:
            props.append(tok[-1])
        elif tok[0] == "end_header":
            body = i
            break
    if body is None or n_vert is None:
        raise CloudFormatError("incomplete PLY header")
    cols = [props.index(c) for c in ("x", "y", "z") if c in props]
    if len(cols) != 3:
        raise CloudFormatError("vertex element lacks x, y, z properties")
    pts = []
    for j in range(n_vert):
        row = body + 1 + j
        if row > len(lines):
            raise CloudFormatError(f"expected {n_vert} vertices, found {j}", row=row)
        vals = _float_row(lines[row - 1].split(), row)
        if len(vals) < len(props):
            raise CloudFormatError(f"expected {len(props)} values, found {len(vals)}", row=row)
        pts.append([vals[c] for c in cols])
    return np.asarray(pts, dtype=float).reshape(n_vert, 3)


def load_cloud(path, format=None):
    """Read a cloud from CSV (one point per row, optional header) or ASCII PLY.

    The format defaults to the file extension. Parse errors raise
    :class:`~subflow.errors.CloudFormatError` carrying the 1-based row.
    """
    path = Path(path)
    fmt = (format or path.suffix.lstrip(".")).lower()
    if fmt not in FORMATS:
        raise ValueError(f"unknown cloud format {fmt!r}")
    pts = _read_csv(path) if fmt == "csv" else _read_ply(path)
    return PointCloud(pts, meta={"source": str(path), "format": fmt})


def save_cloud(path, cloud, header=True):
    """Write a cloud as CSV with round-trip exact float formatting."""
    pts = np.asarray(getattr(cloud, "points", cloud), dtype=float)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if header:
            w.writerow([f"x{c}" for c in range(pts.shape[1])])
        for p in pts:
            w.writerow([repr(float(v)) for v in p])


def write_table(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")
