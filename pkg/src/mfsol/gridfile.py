"""Checkpoint / field file format.

Text header followed by a raw little-endian binary body:

    MFSOL1
    nx=256
    ny=1
    lx=6.283185307179586
    ly=6.283185307179586
    ncomp=3
    dtype=float64
    time=0.125
    data
    <nx*ny*ncomp values, row-major, components interleaved>

dtype is float64 or complex128 (complex values are stored as re/im pairs
of little-endian 64-bit floats).  The body length must match the header
exactly; a mismatch is a format error.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grids import Grid2

MAGIC = "MFSOL1"
_DTYPES = {"float64": np.dtype("<f8"), "complex128": np.dtype("<c16")}


class GridFileError(ValueError):
    pass


@dataclass
class GridFile:
    grid: Grid2
    data: np.ndarray          # shape (nx, ny, ncomp)
    time: float = 0.0

    @property
    def ncomp(self) -> int:
        return self.data.shape[-1]


def write_grid_file(path, field: np.ndarray, grid: Grid2, time: float = 0.0):
    """Write a field of shape (nx,), (nx, ny) or (nx, ny, ncomp)."""
    arr = np.asarray(field)
    if arr.ndim == 1:
        arr = arr[:, None, None]
    elif arr.ndim == 2:
        if grid.is_1d and arr.shape[0] == grid.nx and arr.shape[1] != grid.ny:
            arr = arr[:, None, :]      # 1D multi-component
        else:
            arr = arr[..., None]
    if arr.shape[:2] != (grid.nx, grid.ny):
        raise GridFileError(f"field shape {field.shape} does not match grid "
                            f"({grid.nx}, {grid.ny})")
    if np.iscomplexobj(arr):
        dtype = "complex128"
        body = np.ascontiguousarray(arr, dtype="<c16")
    else:
        dtype = "float64"
        body = np.ascontiguousarray(arr, dtype="<f8")
    header = "\n".join([
        MAGIC,
        f"nx={grid.nx}",
        f"ny={grid.ny}",
        f"lx={grid.lx!r}",
        f"ly={grid.ly!r}",
        f"ncomp={arr.shape[-1]}",
        f"dtype={dtype}",
        f"time={float(time)!r}",
        "data",
    ]) + "\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(body.tobytes(order="C"))


def read_grid_file(path) -> GridFile:
    with open(path, "rb") as fh:
        blob = fh.read()
    marker = b"data\n"
    pos = blob.find(marker)
    if pos < 0:
        raise GridFileError("missing data marker")
    head_lines = blob[:pos].decode("ascii").strip().splitlines()
    if not head_lines or head_lines[0] != MAGIC:
        raise GridFileError("bad magic string")
    kv = {}
    for line in head_lines[1:]:
        key, _, val = line.partition("=")
        kv[key.strip()] = val.strip()
    try:
        nx, ny = int(kv["nx"]), int(kv["ny"])
        lx, ly = float(kv["lx"]), float(kv["ly"])
        ncomp = int(kv["ncomp"])
        dtype = _DTYPES[kv["dtype"]]
        time = float(kv["time"])
    except (KeyError, ValueError) as exc:
        raise GridFileError(f"malformed header: {exc}") from exc
    body = blob[pos + len(marker):]
    expected = nx * ny * ncomp * dtype.itemsize
    if len(body) != expected:
        raise GridFileError(f"body length {len(body)} != declared {expected}")
    arr = np.frombuffer(body, dtype=dtype).reshape(nx, ny, ncomp).copy()
    return GridFile(Grid2(nx, ny, lx, ly), arr, time)
