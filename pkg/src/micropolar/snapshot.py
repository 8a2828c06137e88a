"""Binary snapshot files (``.mpsf``).

Layout, all little-endian:

    b"MPSF"  u32 version  u32 N  u32 field_count
    per field:  u8 tag (0 scalar, 1 vector)  u32 name_length  name (UTF-8)
    payload:    for each field in header order, for each k in lexicographic
                order over {-N/2+1, ..., N/2}^3, the complex coefficients as
                f64 (re, im) pairs with vector components interleaved per mode.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import SnapshotFormatError
from .spectral import Grid, SpectralScalarField, SpectralVectorField

MAGIC = b"MPSF"
VERSION = 1
HERMITIAN_TOL = 1e-9


def _lex_index(n: int) -> np.ndarray:
    return np.arange(-n // 2 + 1, n // 2 + 1) % n


def _to_lex(coeffs: np.ndarray, n: int) -> np.ndarray:
    idx = _lex_index(n)
    arr = coeffs[..., idx, :, :][..., idx, :][..., idx]
    if arr.ndim == 4:
        arr = np.moveaxis(arr, 0, -1)
    return arr


def _from_lex(arr: np.ndarray, n: int) -> np.ndarray:
    if arr.ndim == 4:
        arr = np.moveaxis(arr, -1, 0)
    idx = _lex_index(n)
    out = np.empty_like(arr)
    out[(Ellipsis,) + np.ix_(idx, idx, idx)] = arr
    return out


def encode(fields: Mapping[str, SpectralVectorField | SpectralScalarField]) -> bytes:
    """Serialize named fields sharing one grid."""
    if not fields:
        raise SnapshotFormatError("a snapshot needs at least one field")
    grids = {f.grid.n_modes for f in fields.values()}
    if len(grids) != 1:
        raise SnapshotFormatError("all fields in a snapshot must share N")
    n = grids.pop()
    parts = [MAGIC, struct.pack("<III", VERSION, n, len(fields))]
    for name, f in fields.items():
        raw = name.encode("utf-8")
        tag = 1 if isinstance(f, SpectralVectorField) else 0
        parts.append(struct.pack("<BI", tag, len(raw)))
        parts.append(raw)
    for f in fields.values():
        lex = np.ascontiguousarray(_to_lex(f.coeffs, n), dtype="<c16")
        parts.append(lex.tobytes())
    return b"".join(parts)


def decode(data: bytes, dealias_fraction=None) -> dict[str, SpectralVectorField | SpectralScalarField]:
    """Parse snapshot bytes, verifying Hermitian symmetry of every field."""
    view = memoryview(data)
    if len(data) < 16 or bytes(view[:4]) != MAGIC:
        raise SnapshotFormatError("missing MPSF magic")
    version, n, count = struct.unpack_from("<III", data, 4)
    if version != VERSION:
        raise SnapshotFormatError(f"unsupported snapshot version {version}")
    try:
        grid = Grid(n) if dealias_fraction is None else Grid(n, dealias_fraction)
    except ValueError as exc:
        raise SnapshotFormatError(f"bad grid size in header: {exc}") from None
    pos = 16
    header = []
    for _ in range(count):
        if pos + 5 > len(data):
            raise SnapshotFormatError("truncated field header")
        tag, length = struct.unpack_from("<BI", data, pos)
        pos += 5
        if tag not in (0, 1):
            raise SnapshotFormatError(f"unknown field tag {tag}")
        try:
            name = bytes(view[pos:pos + length]).decode("utf-8")
        except UnicodeDecodeError:
            raise SnapshotFormatError("field name is not valid UTF-8") from None
        pos += length
        header.append((tag, name))
    fields = {}
    for tag, name in header:
        ncomp = 3 if tag == 1 else 1
        nbytes = 16 * ncomp * n**3
        if pos + nbytes > len(data):
            raise SnapshotFormatError(f"truncated payload for field {name!r}")
        flat = np.frombuffer(data, dtype="<c16", count=ncomp * n**3, offset=pos).astype(np.complex128)
        pos += nbytes
        shape = (n, n, n, 3) if tag == 1 else (n, n, n)
        coeffs = _from_lex(flat.reshape(shape), n)
        if not np.all(np.isfinite(coeffs)):
            raise SnapshotFormatError(f"field {name!r} has non-finite coefficients")
        scale = np.max(np.abs(coeffs)) if coeffs.size else 0.0
        if scale > 0:
            if np.max(np.abs(coeffs[..., ~grid.retained])) > HERMITIAN_TOL * scale:
                raise SnapshotFormatError(f"field {name!r} has content on the unpaired Nyquist planes")
            defect = np.max(np.abs(np.conj(coeffs) - grid.reflect(coeffs))) / scale
            if defect > HERMITIAN_TOL:
                raise SnapshotFormatError(f"field {name!r} violates Hermitian symmetry (relative defect {defect:.3e})")
        coeffs[..., ~grid.retained] = 0.0
        cls = SpectralVectorField if tag == 1 else SpectralScalarField
        fields[name] = cls(grid, coeffs)
    if pos != len(data):
        raise SnapshotFormatError("trailing bytes after payload")
    return fields


def write_snapshot(path, fields) -> None:
    Path(path).write_bytes(encode(fields))


def read_snapshot(path, dealias_fraction=None):
    return decode(Path(path).read_bytes(), dealias_fraction)
