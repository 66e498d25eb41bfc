"""Binary field dumps (``.hfd``).

Layout, all little-endian::

    b"HYLO" | u32 version=1 | u32 ndim (1 radial, 3 box)
    | u32 size per axis | f64 length per axis (radial: r_max)
    | u8 kind (0 real, 1 complex) | f64 payload, row-major,
      complex stored as interleaved (re, im)
"""

from __future__ import annotations

import os
import struct

import numpy as np

from .grid import BoxGrid3, Field, RadialGrid

MAGIC = b"HYLO"
VERSION = 1


class FieldFormatError(ValueError):
    """Malformed or unsupported ``.hfd`` content."""


def _header(field):
    grid = field.grid
    if grid.kind == "radial":
        sizes, lengths = (grid.n,), (grid.r_max,)
    else:
        sizes, lengths = grid.n, grid.L
    ndim = len(sizes)
    kind = 1 if field.is_complex else 0
    return (MAGIC + struct.pack("<II", VERSION, ndim)
            + struct.pack(f"<{ndim}I", *sizes)
            + struct.pack(f"<{ndim}d", *lengths)
            + struct.pack("<B", kind))


def field_to_bytes(field: Field) -> bytes:
    values = np.ascontiguousarray(field.values)
    if field.is_complex:
        payload = values.astype("<c16").view("<f8")
    else:
        payload = values.astype("<f8")
    return _header(field) + payload.tobytes()


def field_from_bytes(data: bytes) -> Field:
    if len(data) < 12 or data[:4] != MAGIC:
        raise FieldFormatError("bad magic: not a .hfd field dump")
    version, ndim = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise FieldFormatError(f"unsupported version {version}")
    if ndim not in (1, 3):
        raise FieldFormatError(f"unsupported dimension count {ndim}")
    offset = 12
    need = offset + 4 * ndim + 8 * ndim + 1
    if len(data) < need:
        raise FieldFormatError("truncated header")
    sizes = struct.unpack_from(f"<{ndim}I", data, offset)
    offset += 4 * ndim
    lengths = struct.unpack_from(f"<{ndim}d", data, offset)
    offset += 8 * ndim
    (kind,) = struct.unpack_from("<B", data, offset)
    offset += 1
    if kind not in (0, 1):
        raise FieldFormatError(f"unknown scalar kind {kind}")
    count = int(np.prod(sizes))
    nbytes = count * 8 * (2 if kind else 1)
    if len(data) - offset != nbytes:
        raise FieldFormatError(
            f"payload has {len(data) - offset} bytes, expected {nbytes} (truncated or padded)")
    try:
        grid = RadialGrid(sizes[0], lengths[0]) if ndim == 1 else BoxGrid3(sizes, lengths)
    except ValueError as exc:
        raise FieldFormatError(f"invalid grid in header: {exc}") from exc
    raw = np.frombuffer(data, dtype="<f8", count=count * (2 if kind else 1), offset=offset)
    values = raw.view("<c16") if kind else raw
    return Field(grid, values.reshape(grid.shape).astype(complex if kind else float))


def write_field(field: Field, path) -> None:
    """Write atomically: a temp file is renamed into place."""
    path = os.fspath(path)
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(field_to_bytes(field))
    os.replace(tmp, path)


def read_field(path) -> Field:
    with open(path, "rb") as fh:
        return field_from_bytes(fh.read())
