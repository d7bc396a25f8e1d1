"""PFLD binary field snapshots.

Layout (all little-endian)::

    b"PFLD" | version u32 | dim u32 | M u32 | layout u32 (0 real, 1 spectral)
    float64 payload, row-major, components first

Spectral payloads interleave (re, im) and keep numpy FFT index order.  The
number of components is not stored; it follows from the payload length.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .spectral import RealField, SpectralField, TorusGrid, VectorField

MAGIC = b"PFLD"
VERSION = 1
LAYOUT_REAL = 0
LAYOUT_SPECTRAL = 1
_HEADER = struct.Struct("<4sIIII")


class SnapshotError(ValueError):
    pass


def write_snapshot(path: str | Path, f, layout: str = "spectral") -> None:
    """Write a RealField, SpectralField or VectorField.

    Vector fields may be written in either layout; ``layout='real'`` stores
    their collocation samples.
    """
    grid = f.grid
    if isinstance(f, RealField):
        flag, payload = LAYOUT_REAL, f.values
    elif isinstance(f, SpectralField):
        flag, payload = LAYOUT_SPECTRAL, f.coeffs
    elif layout == "real":
        flag, payload = LAYOUT_REAL, f.to_physical()
    else:
        flag, payload = LAYOUT_SPECTRAL, f.coeffs
    if flag == LAYOUT_SPECTRAL:
        payload = np.ascontiguousarray(payload, dtype="<c16").view("<f8")
    else:
        payload = np.ascontiguousarray(payload, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, grid.dim, grid.modes, flag))
        fh.write(payload.tobytes(order="C"))


def read_snapshot(path: str | Path):
    """Inverse of :func:`write_snapshot`.

    Returns RealField/SpectralField for one component, VectorField for ``dim``
    spectral components, or ``(grid, ndarray)`` for multi-component real data.
    """
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise SnapshotError("truncated header")
    magic, version, dim, M, flag = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise SnapshotError(f"bad magic {magic!r}")
    if version != VERSION:
        raise SnapshotError(f"unsupported version {version}")
    if flag not in (LAYOUT_REAL, LAYOUT_SPECTRAL):
        raise SnapshotError(f"bad layout flag {flag}")
    grid = TorusGrid(dim, M)
    data = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    per_comp = grid.npoints * (2 if flag == LAYOUT_SPECTRAL else 1)
    if data.size == 0 or data.size % per_comp:
        raise SnapshotError(f"payload of {data.size} floats is not a whole number of fields")
    ncomp = data.size // per_comp
    if flag == LAYOUT_SPECTRAL:
        arr = data.view("<c16").astype(complex).reshape((ncomp,) + grid.shape)
        if ncomp == 1:
            return SpectralField(grid, arr[0])
        if ncomp == grid.dim:
            return VectorField(grid, arr)
        raise SnapshotError(f"{ncomp} spectral components on a dim-{dim} grid")
    arr = data.astype(float).reshape((ncomp,) + grid.shape)
    if ncomp == 1:
        return RealField(grid, arr[0])
    return grid, arr
