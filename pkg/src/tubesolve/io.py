"""
Field files and report tables.

A field file holds one row per (node j, frequency xi): ``j, xi_1..xi_N, re, im``.
The first line is a header naming the format version and the grid and box:

    # tubesolve-field v1 format=csv N=1 n_t=512 K=32

In the binary form the header line is followed by little-endian float64
records with the same columns.
"""

from __future__ import annotations

import csv
import json
import re
from pathlib import Path

import numpy as np

from .spectral import CircleGrid, FourierField, FrequencyBox

FIELD_MAGIC = "tubesolve-field"
FIELD_VERSION = 1
_HEADER_RE = re.compile(
    r"^# tubesolve-field v(?P<v>\d+) format=(?P<fmt>csv|binary) N=(?P<N>\d+) n_t=(?P<nt>\d+) K=(?P<K>\S+)"
)


class FieldFormatError(ValueError):
    pass


def _header(fmt, field: FourierField):
    return (f"# {FIELD_MAGIC} v{FIELD_VERSION} format={fmt} N={field.box.N} "
            f"n_t={field.grid.n_t} K={field.box.K!r}\n")


def _records(field: FourierField):
    n, m = field.data.shape
    N = field.box.N
    j = np.repeat(np.arange(n), m)
    xi = np.tile(field.box.frequencies, (n, 1))
    vals = field.data.reshape(-1)
    return np.column_stack([j, xi, vals.real, vals.imag]).astype("<f8"), N


def write_field(path, field: FourierField, fmt="csv"):
    """Write ``field`` as CSV or columnar binary; returns the path."""
    path = Path(path)
    rec, N = _records(field)
    if fmt == "csv":
        names = ["j"] + [f"xi_{d + 1}" for d in range(N)] + ["re", "im"]
        with open(path, "w", newline="") as fh:
            fh.write(_header("csv", field))
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(names)
            for row in rec:
                w.writerow([str(int(row[0]))] + [str(int(v)) for v in row[1:1 + N]]
                           + [repr(float(row[-2])), repr(float(row[-1]))])
    elif fmt == "binary":
        with open(path, "wb") as fh:
            fh.write(_header("binary", field).encode("ascii"))
            fh.write(rec.tobytes())
    else:
        raise ValueError(f"unknown field format {fmt!r}")
    return path


def _parse_header(line):
    m = _HEADER_RE.match(line.strip())
    if not m:
        raise FieldFormatError(f"not a field file header: {line.strip()[:80]!r}")
    if int(m["v"]) != FIELD_VERSION:
        raise FieldFormatError(f"unsupported field format version {m['v']}")
    return m["fmt"], int(m["N"]), int(m["nt"]), float(m["K"])


def read_field(path) -> FourierField:
    """Read a field written by :func:`write_field` (format detected from the header)."""
    path = Path(path)
    with open(path, "rb") as fh:
        first = fh.readline().decode("ascii", errors="replace")
        fmt, N, n_t, K = _parse_header(first)
        if fmt == "binary":
            raw = fh.read()
    grid = CircleGrid(n_t)
    box = FrequencyBox(N, K)
    ncol = N + 3
    if fmt == "binary":
        if len(raw) % (8 * ncol):
            raise FieldFormatError(f"{path}: binary payload is not a whole number of records")
        rec = np.frombuffer(raw, dtype="<f8").reshape(-1, ncol)
    else:
        with open(path, newline="") as fh:
            fh.readline()
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or len(header) != ncol:
                raise FieldFormatError(f"{path}: expected {ncol} columns, got {header}")
            rows = []
            for lineno, row in enumerate(reader, start=3):
                if len(row) != ncol:
                    raise FieldFormatError(f"{path}:{lineno}: expected {ncol} values, got {len(row)}")
                try:
                    rows.append([float(v) for v in row])
                except ValueError as exc:
                    raise FieldFormatError(f"{path}:{lineno}: {exc}") from None
        rec = np.array(rows, dtype=float).reshape(-1, ncol)
    data = np.zeros((n_t, len(box)), dtype=complex)
    seen = np.zeros((n_t, len(box)), dtype=bool)
    index = {tuple(int(v) for v in xi): k for k, xi in enumerate(box.frequencies)}
    for row in rec:
        j = int(row[0])
        xi = tuple(int(v) for v in row[1:1 + N])
        if not 0 <= j < n_t or xi not in index:
            raise FieldFormatError(f"{path}: record (j={j}, xi={xi}) outside grid/box")
        k = index[xi]
        data[j, k] = complex(row[-2], row[-1])
        seen[j, k] = True
    if not seen.all():
        raise FieldFormatError(f"{path}: {int((~seen).sum())} (j, xi) records missing")
    return FourierField(grid, box, data)


def field_suffix(fmt):
    return ".csv" if fmt == "csv" else ".bin"


def _finite(obj):
    # strict JSON: NaN and infinities become null
    if isinstance(obj, (float, np.floating)):
        return float(obj) if np.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    return obj


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_finite(obj), fh, indent=2, sort_keys=True, default=_json_default, allow_nan=False)
        fh.write("\n")
    return Path(path)


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.bool_,)):
        return bool(o)
    if isinstance(o, complex):
        return [o.real, o.imag]
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"cannot serialise {type(o).__name__}")


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_table(path, rows, columns):
    """CSV with fixed column order; tuple-valued ``xi`` is split into xi_1..xi_N."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if rows and "xi" in columns:
            N = len(rows[0]["xi"])
            head = []
            for c in columns:
                head += [f"xi_{d + 1}" for d in range(N)] if c == "xi" else [c]
        else:
            head = list(columns)
        w.writerow(head)
        for r in rows:
            out = []
            for c in columns:
                if c == "xi":
                    out += [str(int(v)) for v in r["xi"]]
                else:
                    out.append(_fmt(r.get(c)))
            w.writerow(out)
    return Path(path)


def read_table(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
