"""On-disk formats: density files, trajectory tables, sparse debug dumps.

The density format is one JSON header line (magic, axis boxes, layout,
dtype) followed by the raw little-endian float64 body in x-fastest
order. Writing and re-reading a field is bitwise lossless: the header
floats survive JSON via shortest-repr round-tripping and the body is
the memory image itself.
"""

from __future__ import annotations

import json

import numpy as np

from .errors import DataFormatError
from .grid import DensityField, Grid

__all__ = [
    "write_density",
    "read_density",
    "write_vector",
    "write_trajectory_csv",
    "read_trajectory_csv",
    "write_table_csv",
    "export_coo_csv",
]

_MAGIC = "MEASINV1"


def write_density(path, field: DensityField) -> None:
    """Write a grid-shaped vector; see read_density for the format."""
    header = {
        "magic": _MAGIC,
        "axes": field.grid.axes_meta(),
        "order": "x-fastest",
        "dtype": "f64le",
    }
    body = np.ascontiguousarray(field.values, dtype="<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("ascii") + b"\n")
        fh.write(body)


# potentials and other cell-indexed vectors share the same container
write_vector = write_density


def read_density(path) -> DensityField:
    with open(path, "rb") as fh:
        line = fh.readline()
        if not line.endswith(b"\n"):
            raise DataFormatError(f"{path}: missing header line")
        try:
            header = json.loads(line.decode("ascii"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise DataFormatError(f"{path}: unreadable header: {exc}") from exc
        if header.get("magic") != _MAGIC:
            raise DataFormatError(
                f"{path}: bad magic {header.get('magic')!r}, expected {_MAGIC!r}"
            )
        if header.get("dtype") != "f64le" or header.get("order") != "x-fastest":
            raise DataFormatError(f"{path}: unsupported dtype/order in header")
        axes = header.get("axes")
        if not isinstance(axes, list) or not axes:
            raise DataFormatError(f"{path}: header lacks axis descriptions")
        try:
            grid = Grid(
                lo=tuple(float(a["lo"]) for a in axes),
                hi=tuple(float(a["hi"]) for a in axes),
                counts=tuple(int(a["count"]) for a in axes),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataFormatError(f"{path}: malformed axis description: {exc}") from exc
        body = fh.read()
    expected = 8 * grid.n
    if len(body) != expected:
        raise DataFormatError(
            f"{path}: body holds {len(body)} bytes, expected {expected}"
        )
    values = np.frombuffer(body, dtype="<f8").astype(float)
    return DensityField(grid, values)


def write_trajectory_csv(path, times: np.ndarray, states: np.ndarray) -> None:
    times = np.asarray(times, dtype=float).reshape(-1, 1)
    states = np.asarray(states, dtype=float)
    if states.shape[0] != times.shape[0]:
        raise ValueError("times and states disagree on the number of rows")
    names = ["x", "y", "z", "w"][: states.shape[1]]
    if states.shape[1] > 4:
        names = [f"x{i}" for i in range(states.shape[1])]
    np.savetxt(
        path,
        np.hstack([times, states]),
        delimiter=",",
        header="t," + ",".join(names),
        comments="",
        fmt="%.17g",
    )


def read_trajectory_csv(path) -> tuple[np.ndarray, np.ndarray]:
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except (OSError, ValueError) as exc:
        raise DataFormatError(f"{path}: cannot parse trajectory table: {exc}") from exc
    if data.shape[1] < 2:
        raise DataFormatError(f"{path}: trajectory table needs t plus state columns")
    return data[:, 0], data[:, 1:]


def write_table_csv(path, header: list, rows: list) -> None:
    lines = [",".join(str(h) for h in header)]
    for row in rows:
        lines.append(",".join(str(v) for v in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def export_coo_csv(path, matrix) -> None:
    """Triplet dump of a sparse matrix for external inspection."""
    coo = matrix.tocoo()
    with open(path, "w") as fh:
        fh.write("row,col,value\n")
        for i, j, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{i},{j},{float(v)!r}\n")
