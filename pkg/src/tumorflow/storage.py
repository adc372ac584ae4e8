"""Snapshot files, field exports and diagnostics tables.

Snapshot layout (little-endian)::

    b"TFLO"  u32 version  u32 d  u32 N  f64 L  f64 t  u64 step  u64 params_hash
    P Q D C W sigma phi         N^d f64 each, C order over [i_x, i_y(, i_z)]
    v_0 .. v_{d-1}              face components, C order
    u64 checksum                first 8 bytes of BLAKE2b over all preceding bytes
"""
from __future__ import annotations

import csv
import hashlib
import os
import struct
from pathlib import Path

import numpy as np

from .core import Grid, GridMismatchError, faces_to_centers, make_grid
from .scheme import State

MAGIC = b"TFLO"
VERSION = 1
_HEADER = struct.Struct("<4sIIIddQQ")
_CHECK = struct.Struct("<Q")
SCALAR_ORDER = ("P", "Q", "D", "C", "W", "sigma", "phi")


class SnapshotError(ValueError):
    pass


class ChecksumError(SnapshotError):
    pass


class VersionError(SnapshotError):
    pass


def _digest(data: bytes) -> int:
    return int.from_bytes(hashlib.blake2b(data, digest_size=8).digest(), "little")


def encode_snapshot(state: State, grid: Grid, params_hash: int = 0) -> bytes:
    parts = [_HEADER.pack(MAGIC, VERSION, grid.d, grid.N, grid.L, state.t, state.step,
                          params_hash & 0xFFFFFFFFFFFFFFFF)]
    for name in SCALAR_ORDER:
        arr = np.asarray(getattr(state, name), dtype="<f8")
        if arr.shape != grid.shape:
            raise GridMismatchError(f"{name}: shape {arr.shape} does not match grid {grid.shape}")
        parts.append(np.ascontiguousarray(arr).tobytes())
    for a, comp in enumerate(state.v):
        comp = np.asarray(comp, dtype="<f8")
        if comp.shape != grid.face_shape(a):
            raise GridMismatchError(f"v[{a}]: shape {comp.shape} does not match {grid.face_shape(a)}")
        parts.append(np.ascontiguousarray(comp).tobytes())
    body = b"".join(parts)
    return body + _CHECK.pack(_digest(body))


def write_snapshot(state: State, grid: Grid, path, params_hash: int = 0) -> Path:
    path = Path(path)
    data = encode_snapshot(state, grid, params_hash)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)
    return path


def decode_snapshot(data: bytes, expect: Grid = None) -> tuple:
    """Return ``(state, grid, params_hash)``."""
    if len(data) < _HEADER.size + _CHECK.size:
        raise ChecksumError("snapshot truncated: header incomplete")
    magic, version, d, N, L, t, step, phash = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise SnapshotError(f"not a snapshot file (magic {magic!r})")
    if version != VERSION:
        raise VersionError(f"snapshot format version {version}, this reader handles {VERSION}")
    body, tail = data[:-_CHECK.size], data[-_CHECK.size:]
    grid = make_grid(d, L, N)
    need = _HEADER.size + 8 * (len(SCALAR_ORDER) * grid.ncells
                               + sum(int(np.prod(grid.face_shape(a))) for a in range(d)))
    if len(body) != need or _CHECK.unpack(tail)[0] != _digest(body):
        raise ChecksumError("snapshot checksum mismatch (file truncated or corrupted)")
    if expect is not None and (expect.d, expect.N, expect.L) != (grid.d, grid.N, grid.L):
        raise GridMismatchError(
            f"snapshot grid (d={d}, N={N}, L={L}) does not match run grid "
            f"(d={expect.d}, N={expect.N}, L={expect.L})")
    off = _HEADER.size
    fields = {}
    for name in SCALAR_ORDER:
        n = grid.ncells
        fields[name] = np.frombuffer(body, "<f8", n, off).reshape(grid.shape).astype(float)
        off += 8 * n
    v = []
    for a in range(d):
        shape = grid.face_shape(a)
        n = int(np.prod(shape))
        v.append(np.frombuffer(body, "<f8", n, off).reshape(shape).astype(float))
        off += 8 * n
    state = State(t, fields["P"], fields["Q"], fields["D"], fields["C"], fields["W"], tuple(v),
                  fields["sigma"], fields["phi"], int(step))
    return state, grid, phash


def read_snapshot(path, expect: Grid = None) -> tuple:
    with open(path, "rb") as fh:
        return decode_snapshot(fh.read(), expect)


def snapshot_checksum(path) -> int:
    with open(path, "rb") as fh:
        data = fh.read()
    return _CHECK.unpack(data[-_CHECK.size:])[0]


# ---------------------------------------------------------------- exports

def export_fields(state: State, grid: Grid, outdir, fmt: str = "vtk", stem: str = "field") -> list:
    """Write one file per scalar plus the cell-centered speed ``|v|``."""
    if fmt not in ("vtk", "csv"):
        raise ValueError(f"format must be vtk or csv, got {fmt!r}")
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    fields = dict(state.scalars())
    fields["speed"] = np.sqrt(sum(c * c for c in faces_to_centers(state.v)))
    written = []
    for name, arr in fields.items():
        path = outdir / f"{stem}_{name}.{fmt}"
        (_write_vtk if fmt == "vtk" else _write_csv)(path, grid, name, arr)
        written.append(path)
    return written


def _write_vtk(path, grid: Grid, name: str, arr: np.ndarray) -> None:
    dims = list(grid.shape) + [1] * (3 - grid.d)
    origin = [0.5 * grid.h] * grid.d + [0.0] * (3 - grid.d)
    lines = ["# vtk DataFile Version 3.0", f"tumorflow field {name}", "ASCII", "DATASET STRUCTURED_POINTS",
             "DIMENSIONS " + " ".join(map(str, dims)),
             "ORIGIN " + " ".join(f"{o:.17g}" for o in origin),
             "SPACING " + " ".join(f"{grid.h:.17g}" for _ in range(3)),
             f"POINT_DATA {grid.ncells}", f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
    vals = np.asarray(arr, dtype=float).ravel(order="F")  # VTK wants x fastest
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")
        np.savetxt(fh, vals, fmt="%.17g")


def _write_csv(path, grid: Grid, name: str, arr: np.ndarray) -> None:
    coords = [c.ravel() for c in grid.centers()]
    cols = np.column_stack(coords + [np.asarray(arr, dtype=float).ravel()])
    header = ",".join("xyz"[: grid.d]) + f",{name}"
    np.savetxt(path, cols, fmt="%.17g", delimiter=",", header=header, comments="")


def read_field_csv(path, grid: Grid) -> np.ndarray:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[0] != grid.ncells:
        raise GridMismatchError(f"{path}: {data.shape[0]} rows for a grid of {grid.ncells} cells")
    return data[:, -1].reshape(grid.shape)


def read_field_vtk(path, grid: Grid) -> np.ndarray:
    with open(path, encoding="ascii") as fh:
        lines = fh.read().split("\n")
    start = lines.index("LOOKUP_TABLE default") + 1
    vals = np.array([float(x) for x in lines[start:] if x.strip()])
    return vals.reshape(grid.shape, order="F")


def write_diagnostics_csv(records, path) -> Path:
    path = Path(path)
    rows = [r.row() for r in records]
    if not rows:
        path.write_text("t\n")
        return path
    names = list(rows[0])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for r in rows:
            w.writerow([repr(float(r[n])) if isinstance(r[n], float) else r[n] for n in names])
    return path


def read_diagnostics_csv(path) -> list:
    with open(path, newline="", encoding="utf-8") as fh:
        return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(fh)]
