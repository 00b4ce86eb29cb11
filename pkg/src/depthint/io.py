"""Binary tensor files and observation CSVs.

DTEN layout (all integers little-endian)::

    b"DTEN" | u32 version (=1) | u32 rank | rank x u64 dims | float64 LE data, row-major

A gradient-field file holds two DTEN payloads (``gx`` then ``gy``) behind a
two-entry header: u32 entry count (=2) followed by one u64 byte length per
payload.
"""
from __future__ import annotations

import csv
import io
import struct
from pathlib import Path

import numpy as np

from .errors import DomainError, ShapeError
from .grid import GradientField, SparseObservations

MAGIC = b"DTEN"
VERSION = 1


class FormatError(DomainError):
    """A file does not follow the expected on-disk layout."""


def dten_bytes(array) -> bytes:
    a = np.ascontiguousarray(array, dtype="<f8")
    header = MAGIC + struct.pack("<II", VERSION, a.ndim) + struct.pack(f"<{a.ndim}Q", *a.shape)
    return header + a.tobytes(order="C")


def parse_dten(buf: bytes) -> np.ndarray:
    if len(buf) < 12 or buf[:4] != MAGIC:
        raise FormatError("missing DTEN magic")
    version, rank = struct.unpack_from("<II", buf, 4)
    if version != VERSION:
        raise FormatError(f"unsupported DTEN version {version}")
    off = 12 + 8 * rank
    if len(buf) < off:
        raise FormatError("truncated DTEN header")
    dims = struct.unpack_from(f"<{rank}Q", buf, 12)
    n = int(np.prod(dims, dtype=np.int64)) if rank else 1
    if len(buf) != off + 8 * n:
        raise FormatError(f"DTEN payload has {len(buf) - off} bytes, expected {8 * n}")
    return np.frombuffer(buf, dtype="<f8", count=n, offset=off).astype(np.float64).reshape(dims)


def write_dten(path, array) -> None:
    Path(path).write_bytes(dten_bytes(array))


def read_dten(path) -> np.ndarray:
    return parse_dten(Path(path).read_bytes())


def gradient_bytes(g: GradientField) -> bytes:
    payloads = [dten_bytes(g.gx), dten_bytes(g.gy)]
    header = struct.pack("<I", 2) + struct.pack("<2Q", *(len(p) for p in payloads))
    return header + b"".join(payloads)


def parse_gradient(buf: bytes) -> GradientField:
    if len(buf) < 20:
        raise FormatError("truncated gradient-field header")
    (count,) = struct.unpack_from("<I", buf, 0)
    if count != 2:
        raise FormatError(f"gradient-field file must hold 2 payloads, found {count}")
    nx, ny = struct.unpack_from("<2Q", buf, 4)
    if len(buf) != 20 + nx + ny:
        raise FormatError("gradient-field payload lengths do not match file size")
    gx = parse_dten(buf[20:20 + nx])
    gy = parse_dten(buf[20 + nx:])
    return GradientField(gx, gy)


def write_gradient(path, g: GradientField) -> None:
    Path(path).write_bytes(gradient_bytes(g))


def read_gradient(path) -> GradientField:
    return parse_gradient(Path(path).read_bytes())


def observations_csv(obs: SparseObservations) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["row", "col", "depth"])
    for r, c in zip(*np.nonzero(obs.mask)):
        writer.writerow([int(r), int(c), repr(float(obs.values[r, c]))])
    return buf.getvalue()


def write_observations(path, obs: SparseObservations) -> None:
    Path(path).write_text(observations_csv(obs))


def parse_observations(text: str, height: int, width: int) -> SparseObservations:
    """Parse ``row,col,depth`` CSV text (0-based indices) onto an HxW grid."""
    values = np.zeros((height, width))
    mask = np.zeros((height, width), dtype=bool)
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None:
        return SparseObservations(values, mask)
    if [h.strip() for h in header] != ["row", "col", "depth"]:
        raise FormatError(f"expected header row,col,depth, got {header}")
    for lineno, rec in enumerate(reader, start=2):
        if not rec:
            continue
        if len(rec) != 3:
            raise FormatError(f"line {lineno}: expected 3 fields")
        r, c, d = int(rec[0]), int(rec[1]), float(rec[2])
        if not (0 <= r < height and 0 <= c < width):
            raise ShapeError(f"line {lineno}: pixel ({r}, {c}) outside {height}x{width} grid")
        if not (np.isfinite(d) and d > 0):
            raise DomainError(f"line {lineno}: depth must be positive, got {rec[2]}")
        if mask[r, c]:
            raise FormatError(f"line {lineno}: duplicate observation at ({r}, {c})")
        values[r, c] = d
        mask[r, c] = True
    return SparseObservations(values, mask)


def read_observations(path, height: int, width: int) -> SparseObservations:
    return parse_observations(Path(path).read_text(), height, width)
