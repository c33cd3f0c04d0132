"""Field snapshots.

Each file starts with the header line
``# mac-field kind=<u|v|p> nx=<nx> ny=<ny> lx=<lx> ly=<ly>``.  The CSV
variant follows with one value per line; the binary variant with raw
little-endian float64.  Values are stored row-major over the ``[i, j]``
array (the x-index varies slowest).
"""
from __future__ import annotations

import re
from pathlib import Path

import numpy as np

from .grid import StaggeredGrid

_HEADER = re.compile(r"^# mac-field kind=(u|v|p) nx=(\d+) ny=(\d+) lx=(\S+) ly=(\S+)$")


def header(kind: str, grid: StaggeredGrid) -> str:
    return f"# mac-field kind={kind} nx={grid.nx} ny={grid.ny} lx={grid.lx!r} ly={grid.ly!r}"


def _expected_shape(kind, grid):
    return {"u": grid.u_shape, "v": grid.v_shape, "p": grid.p_shape}[kind]


def write_snapshot(path, values, kind: str, grid: StaggeredGrid, binary: bool = False) -> Path:
    values = np.asarray(values, dtype=float)
    if kind not in ("u", "v", "p"):
        raise ValueError(f"unknown field kind {kind!r}")
    if values.shape != _expected_shape(kind, grid):
        raise ValueError(f"{kind}-field must have shape {_expected_shape(kind, grid)}, got {values.shape}")
    path = Path(path)
    if binary:
        with open(path, "wb") as fh:
            fh.write((header(kind, grid) + "\n").encode("ascii"))
            fh.write(values.astype("<f8").tobytes(order="C"))
    else:
        with open(path, "w", newline="\n") as fh:
            fh.write(header(kind, grid) + "\n")
            fh.writelines(repr(float(x)) + "\n" for x in values.ravel(order="C"))
    return path


def read_snapshot(path):
    """Return ``(values, kind, grid)``; the format is detected from the content."""
    raw = Path(path).read_bytes()
    first, _, rest = raw.partition(b"\n")
    m = _HEADER.match(first.decode("ascii").strip())
    if m is None:
        raise ValueError(f"{path}: missing or malformed mac-field header")
    kind = m.group(1)
    grid = StaggeredGrid(int(m.group(2)), int(m.group(3)), float(m.group(4)), float(m.group(5)))
    shape = _expected_shape(kind, grid)
    n = shape[0] * shape[1]
    try:
        vals = np.array(rest.decode("ascii").split(), dtype=float)
    except (UnicodeDecodeError, ValueError):
        vals = None
    if vals is None or vals.size != n:
        if len(rest) != 8 * n:
            raise ValueError(f"{path}: expected {n} values")
        vals = np.frombuffer(rest, dtype="<f8")
    return vals.reshape(shape).copy(), kind, grid
