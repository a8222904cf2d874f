"""Run artifacts: trace.csv, summary.json and CFL1 field snapshots.

CFL1 layout (all little-endian):
    bytes 0-3    magic b"CFL1"
    uint32       ndim
    uint32[ndim] dimensions
    float64      time
    float64[...] values in row-major (C) order
"""

import csv
import json
import math
from pathlib import Path
import struct

import numpy as np

from .errors import ConfigurationError
from .flow import TRACE_COLUMNS

MAGIC = b"CFL1"

UNITS = {
    "t": "dimensionless flow time",
    "dt": "dimensionless flow time",
    "Ca": "integral of S^2 against the metric volume form",
    "mCa": "integral of (S - Sbar - theta_X)^2 against the metric volume form",
    "max_residual": "max over nodes of |S - Sbar - theta_X|",
    "dist_c0": "max |phi - phi_ref| modulo constants (torus) or affine functions (toric)",
    "dist_l2": "L2 distance matching dist_c0, flat measure",
    "positivity_margin": "min density h (torus) or relative Hessian margin (toric)",
    "futaki_1": "modified Futaki invariant of x_1 (NaN on the torus)",
    "futaki_2": "modified Futaki invariant of x_2 (NaN unless 2-D toric)",
    "lambda1": "constrained Lichnerowicz gap at snapshot steps (NaN elsewhere)",
}


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    return f"{v:.17g}"


def write_trace_csv(trace, path):
    """Header row, then one line per accepted record in :data:`TRACE_COLUMNS` order."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for rec in trace.accepted:
            w.writerow([_fmt(v) for v in rec.row()])
    return path


def read_trace_csv(path):
    """Column name -> float array."""
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if tuple(header) != TRACE_COLUMNS:
        raise ConfigurationError(f"{path}: unexpected trace header")
    data = np.array([[float(x) for x in r] for r in body], dtype=float).reshape(-1, len(header))
    return {name: data[:, j] for j, name in enumerate(header)}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_summary(summary, path):
    path = Path(path)
    path.write_text(json.dumps(_jsonable(summary), indent=2, sort_keys=True, allow_nan=False) + "\n")
    return path


def write_snapshot(path, values, t):
    a = np.ascontiguousarray(values, dtype="<f8")
    header = MAGIC + struct.pack(f"<I{a.ndim}I", a.ndim, *a.shape) + struct.pack("<d", float(t))
    Path(path).write_bytes(header + a.tobytes(order="C"))
    return Path(path)


def read_snapshot(path):
    """Return ``(t, values)`` from a CFL1 file."""
    buf = Path(path).read_bytes()
    if buf[:4] != MAGIC:
        raise ConfigurationError(f"{path}: not a CFL1 snapshot")
    (ndim,) = struct.unpack_from("<I", buf, 4)
    dims = struct.unpack_from(f"<{ndim}I", buf, 8)
    off = 8 + 4 * ndim
    (t,) = struct.unpack_from("<d", buf, off)
    off += 8
    count = int(np.prod(dims))
    if len(buf) != off + 8 * count:
        raise ConfigurationError(f"{path}: truncated snapshot")
    values = np.frombuffer(buf, dtype="<f8", count=count, offset=off).reshape(dims)
    return t, values.astype(float)
