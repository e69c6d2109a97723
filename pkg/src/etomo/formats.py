"""On-disk formats: binary field container, sinogram CSV, JSON documents.

Field container layout::

    b"ETOMOFLD"                      8-byte magic
    uint64 little-endian             header length in bytes
    UTF-8 JSON header                keys sorted
    float64 little-endian payload    values[c, *grid], C order

The header carries ``format_version``, ``kind`` (``elastic`` or ``vector``),
``n``, ``m``, ``ncomp``, ``grid_shape``, ``spacing``, ``extent``, ``origin``,
``layout`` and ``dtype``.
"""
from __future__ import annotations

import csv
import io
import json
import struct
from pathlib import Path

import numpy as np

from .field_ops import ElasticField, Grid, VectorField
from .ray_transform import Sinogram
from .tensor_core import TensorShape

__all__ = [
    "FormatError",
    "MAGIC",
    "FORMAT_VERSION",
    "field_to_bytes",
    "field_from_bytes",
    "write_field",
    "read_field",
    "sinogram_to_csv",
    "read_sinogram_csv",
    "dump_json",
    "write_json",
]

MAGIC = b"ETOMOFLD"
FORMAT_VERSION = 1
LAYOUT = "canonical-components, row-major grid"
DTYPE = "float64 little-endian"
SINOGRAM_HEADER = ["vparams", "branch", "qparams", "offset", "value"]


class FormatError(ValueError):
    """Malformed container or table; the message names the offending field."""


def _header(f) -> dict:
    grid = f.grid
    if isinstance(f, VectorField):
        kind, m, ncomp = "vector", None, grid.n
    else:
        kind, m, ncomp = "elastic", f.shape.m, f.shape.dim
    return {
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "n": grid.n,
        "m": m,
        "ncomp": ncomp,
        "grid_shape": list(grid.shape),
        "spacing": [float(s) for s in grid.spacing],
        "extent": list(grid.extent),
        "origin": list(grid.origin),
        "layout": LAYOUT,
        "dtype": DTYPE,
    }


def field_to_bytes(f) -> bytes:
    header = json.dumps(_header(f), sort_keys=True).encode()
    payload = np.ascontiguousarray(f.values, dtype="<f8").tobytes()
    return MAGIC + struct.pack("<Q", len(header)) + header + payload


def _require(header: dict, key: str, check, what: str):
    if key not in header:
        raise FormatError(f"container header is missing field '{key}'")
    value = header[key]
    if not check(value):
        raise FormatError(f"container header field '{key}' is invalid: expected {what}, got {value!r}")
    return value


def _is_int(x):
    return isinstance(x, int) and not isinstance(x, bool)


def field_from_bytes(data: bytes):
    if len(data) < 16 or data[:8] != MAGIC:
        raise FormatError("container field 'magic' is invalid: not an etomo field container")
    (hlen,) = struct.unpack("<Q", data[8:16])
    if 16 + hlen > len(data):
        raise FormatError(f"container field 'header_length' is invalid: {hlen} exceeds file size")
    try:
        header = json.loads(data[16:16 + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"container field 'header' is not valid JSON: {exc}") from None
    if not isinstance(header, dict):
        raise FormatError("container field 'header' is not a JSON object")
    _require(header, "format_version", lambda v: v == FORMAT_VERSION, f"{FORMAT_VERSION}")
    kind = _require(header, "kind", lambda v: v in ("elastic", "vector"), "'elastic' or 'vector'")
    n = _require(header, "n", lambda v: _is_int(v) and v >= 1, "a positive integer")
    m = _require(header, "m", lambda v: (v is None and kind == "vector") or (_is_int(v) and v >= 0),
                 "a nonnegative integer (null for vector fields)")
    gshape = _require(header, "grid_shape",
                      lambda v: isinstance(v, list) and len(v) == n and all(_is_int(s) and s >= 1 for s in v),
                      f"a list of {n} positive integers")
    spacing = _require(header, "spacing",
                       lambda v: isinstance(v, list) and len(v) == n and all(isinstance(s, (int, float)) and s > 0 for s in v),
                       f"a list of {n} positive numbers")
    origin = _require(header, "origin",
                      lambda v: isinstance(v, list) and len(v) == n and all(isinstance(s, (int, float)) for s in v),
                      f"a list of {n} numbers")
    _require(header, "layout", lambda v: v == LAYOUT, repr(LAYOUT))
    _require(header, "dtype", lambda v: v == DTYPE, repr(DTYPE))
    expected_ncomp = n if kind == "vector" else TensorShape(n, m).dim
    _require(header, "ncomp", lambda v: v == expected_ncomp, str(expected_ncomp))
    payload = data[16 + hlen:]
    count = expected_ncomp * int(np.prod(gshape))
    if len(payload) != 8 * count:
        raise FormatError(f"container field 'payload' has {len(payload)} bytes, expected {8 * count}")
    values = np.frombuffer(payload, dtype="<f8").reshape(expected_ncomp, *gshape).astype(float)
    extent = header.get("extent")
    if extent is None:
        extent = [s * k for s, k in zip(spacing, gshape)]
    elif not (isinstance(extent, list) and len(extent) == n
              and all(isinstance(e, (int, float)) and e > 0 for e in extent)):
        raise FormatError(f"container header field 'extent' is invalid: got {extent!r}")
    grid = Grid(tuple(gshape), tuple(extent), tuple(origin))
    if kind == "vector":
        return VectorField(grid, values)
    return ElasticField(grid, TensorShape(n, m), values)


def write_field(path, f):
    Path(path).write_bytes(field_to_bytes(f))


def read_field(path):
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read container: {exc}") from None
    return field_from_bytes(data)


def _fmt(x) -> str:
    return "%.17g" % float(x)


def _vec(a) -> str:
    return " ".join(_fmt(x) for x in a)


def sinogram_to_csv(s: Sinogram) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SINOGRAM_HEADER)
    for v, b, q, o, val in zip(s.v, s.branch, s.q, s.offset, s.value):
        w.writerow([_vec(v), b, _vec(q), _vec(o), _fmt(val)])
    return buf.getvalue()


def read_sinogram_csv(text: str) -> dict:
    """Parse a sinogram CSV into arrays ``v``, ``branch``, ``q``, ``offset``, ``value``."""
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != SINOGRAM_HEADER:
        raise FormatError(f"sinogram header must be {','.join(SINOGRAM_HEADER)}")
    body = rows[1:]

    def vecs(col):
        return np.array([[float(x) for x in r[col].split()] for r in body])

    return {
        "v": vecs(0),
        "branch": np.array([r[1] for r in body]),
        "q": vecs(2),
        "offset": vecs(3),
        "value": np.array([float(r[4]) for r in body]),
    }


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def write_json(path, obj):
    Path(path).write_text(dump_json(obj))
