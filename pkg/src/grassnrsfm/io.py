"""Matrix file formats.

Binary: ``b"GNRS"``, ``u32`` version (1), ``u64`` rows, ``u64`` cols, then the
row-major little-endian ``f64`` payload.

CSV: a header line ``rows=R,cols=C`` followed by ``R`` comma-separated rows.
"""

from __future__ import annotations

import os
import struct

import numpy as np

from .data_model import MalformedInputError

MAGIC = b"GNRS"
VERSION = 1
_HEADER = struct.Struct("<4sIQQ")

__all__ = ["MatrixFormatError", "load_matrix", "save_matrix", "guess_format"]


class MatrixFormatError(MalformedInputError):
    pass


def guess_format(path) -> str:
    ext = os.path.splitext(str(path))[1].lower()
    return "binary" if ext in (".bin", ".gnrs") else "csv"


def _norm_format(fmt, path):
    fmt = guess_format(path) if fmt is None else fmt.lower()
    if fmt in ("binary", "binary-f64", "bin"):
        return "binary"
    if fmt == "csv":
        return "csv"
    raise ValueError(f"unknown matrix format {fmt!r}")


def save_matrix(matrix, path, format=None):
    M = np.asarray(matrix, dtype="<f8")
    if M.ndim != 2:
        raise ValueError("only 2-D matrices can be saved")
    fmt = _norm_format(format, path)
    if fmt == "binary":
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, VERSION, M.shape[0], M.shape[1]))
            fh.write(np.ascontiguousarray(M).tobytes())
        return
    with open(path, "w", newline="\n") as fh:
        fh.write(f"rows={M.shape[0]},cols={M.shape[1]}\n")
        for row in M:
            fh.write(",".join(repr(float(v)) for v in row))
            fh.write("\n")


def _parse_header(line, path):
    fields = {}
    for part in line.strip().split(","):
        key, sep, val = part.partition("=")
        if not sep:
            raise MatrixFormatError(f"{path}: bad header {line.strip()!r}")
        fields[key.strip()] = val.strip()
    try:
        return int(fields["rows"]), int(fields["cols"])
    except (KeyError, ValueError):
        raise MatrixFormatError(
            f"{path}: header must read 'rows=R,cols=C'") from None


def load_matrix(path, format=None) -> np.ndarray:
    fmt = _norm_format(format, path)
    if fmt == "binary":
        with open(path, "rb") as fh:
            head = fh.read(_HEADER.size)
            if len(head) != _HEADER.size:
                raise MatrixFormatError(f"{path}: truncated header")
            magic, version, rows, cols = _HEADER.unpack(head)
            if magic != MAGIC:
                raise MatrixFormatError(f"{path}: bad magic {magic!r}")
            if version != VERSION:
                raise MatrixFormatError(f"{path}: unsupported version {version}")
            payload = fh.read()
        if len(payload) != rows * cols * 8:
            raise MatrixFormatError(
                f"{path}: payload has {len(payload)} bytes, header declares {rows}x{cols}")
        return np.frombuffer(payload, dtype="<f8").reshape(rows, cols).astype(np.float64)

    with open(path) as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if not lines:
        raise MatrixFormatError(f"{path}: empty file")
    rows, cols = _parse_header(lines[0], path)
    body = lines[1:]
    if len(body) != rows:
        raise MatrixFormatError(
            f"{path}: header declares {rows} rows, found {len(body)}")
    out = np.empty((rows, cols))
    for i, line in enumerate(body):
        parts = line.split(",")
        if len(parts) != cols:
            raise MatrixFormatError(
                f"{path}: row {i} has {len(parts)} values, expected {cols}")
        try:
            out[i] = [float(p) for p in parts]
        except ValueError:
            raise MatrixFormatError(f"{path}: row {i} is not numeric") from None
    return out
