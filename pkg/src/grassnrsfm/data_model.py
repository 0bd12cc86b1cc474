"""Matrix containers, the shape reshuffle and column-order bookkeeping.

Layout conventions
------------------
``S`` is ``3F x P``: rows ``3f, 3f+1, 3f+2`` hold the X, Y, Z coordinates of
frame ``f``.  The reshuffled matrix ``S#`` is ``3P x F``: column ``f`` is
``[x_f1..x_fP, y_f1..y_fP, z_f1..z_fP]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "MalformedInputError",
    "MeasurementMatrix",
    "RotationStack",
    "ShapeMatrix",
    "ReshuffledShape",
    "OrderingVector",
    "reshuffle",
    "inverse_reshuffle",
    "reorder_columns",
    "relative_permutation",
    "compose_orderings",
    "is_permutation",
]


class MalformedInputError(ValueError):
    """Raised when a matrix does not have the layout an operation expects."""


def is_permutation(indices, n=None) -> bool:
    idx = np.asarray(indices)
    if idx.ndim != 1 or not np.issubdtype(idx.dtype, np.integer):
        return False
    if n is not None and idx.size != n:
        return False
    return np.array_equal(np.sort(idx), np.arange(idx.size))


def _check_perm(indices, n, what="ordering"):
    idx = np.asarray(indices)
    if idx.ndim == 1 and idx.dtype.kind == "f" and np.all(idx == np.round(idx)):
        idx = idx.astype(np.int64)
    if not is_permutation(idx, n):
        raise MalformedInputError(f"{what} is not a permutation of 0..{n - 1}")
    return idx.astype(np.int64, copy=False)


def _readonly(a):
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class OrderingVector:
    """Permutation of column indices (``indices[j]`` = source column of ``j``)."""

    indices: np.ndarray

    def __post_init__(self):
        idx = _check_perm(self.indices, np.asarray(self.indices).size)
        idx = idx.copy()
        idx.setflags(write=False)
        object.__setattr__(self, "indices", idx)

    def __len__(self):
        return self.indices.size

    @classmethod
    def identity(cls, n):
        return cls(np.arange(n))

    def inverse(self) -> "OrderingVector":
        inv = np.empty_like(self.indices)
        inv[self.indices] = np.arange(self.indices.size)
        return OrderingVector(inv)


@dataclass(frozen=True)
class MeasurementMatrix:
    """Stacked 2D tracks ``W`` (``2F x P``) with its column chart."""

    data: np.ndarray
    point_ids: np.ndarray = field(default=None)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise MalformedInputError("measurement matrix must be 2-D")
        if data.shape[0] == 0 or data.shape[0] % 2:
            raise MalformedInputError(
                f"rows must be even (2F), got {data.shape[0]} rows")
        if data.shape[1] < 1:
            raise MalformedInputError("measurement matrix needs at least one point")
        if not np.all(np.isfinite(data)):
            raise MalformedInputError("measurement matrix has non-finite entries")
        ids = np.arange(data.shape[1]) if self.point_ids is None else self.point_ids
        ids = _check_perm(ids, data.shape[1], "point_ids").copy()
        ids.setflags(write=False)
        object.__setattr__(self, "data", _readonly(data))
        object.__setattr__(self, "point_ids", ids)

    @property
    def frames(self) -> int:
        return self.data.shape[0] // 2

    @property
    def points(self) -> int:
        return self.data.shape[1]

    def reorder(self, ordering) -> "MeasurementMatrix":
        data, ids = reorder_columns(self.data, ordering, self.point_ids)
        return MeasurementMatrix(data, ids)


@dataclass(frozen=True)
class RotationStack:
    """Per-frame orthographic camera rows, stored as ``(F, 2, 3)``."""

    blocks: np.ndarray
    atol: float = 1e-8

    def __post_init__(self):
        b = np.asarray(self.blocks, dtype=np.float64)
        if b.ndim == 2:
            if b.shape[1] != 3 or b.shape[0] % 2:
                raise MalformedInputError(
                    f"rotation matrix must be 2F x 3, got {b.shape[0]}x{b.shape[1]}")
            b = b.reshape(-1, 2, 3)
        if b.ndim != 3 or b.shape[1:] != (2, 3) or b.shape[0] < 1:
            raise MalformedInputError("rotation blocks must have shape (F, 2, 3)")
        gram = b @ b.transpose(0, 2, 1)
        if not np.allclose(gram, np.eye(2), atol=self.atol, rtol=0):
            worst = int(np.argmax(np.abs(gram - np.eye(2)).max(axis=(1, 2))))
            raise MalformedInputError(
                f"rotation block {worst} does not have orthonormal rows")
        object.__setattr__(self, "blocks", _readonly(b))

    @property
    def frames(self) -> int:
        return self.blocks.shape[0]

    def as_matrix(self) -> np.ndarray:
        """Stacked ``2F x 3`` form used by the file formats."""
        return self.blocks.reshape(-1, 3).copy()

    def block_diagonal(self) -> np.ndarray:
        F = self.frames
        R = np.zeros((2 * F, 3 * F))
        for f in range(F):
            R[2 * f:2 * f + 2, 3 * f:3 * f + 3] = self.blocks[f]
        return R

    def project(self, S) -> np.ndarray:
        """``R S`` for a ``3F x P`` shape matrix, frame by frame."""
        S = np.asarray(S, dtype=np.float64)
        F = self.frames
        P = S.shape[1]
        return np.einsum("fij,fjp->fip", self.blocks, S.reshape(F, 3, P)).reshape(2 * F, P)


@dataclass(frozen=True)
class ShapeMatrix:
    data: np.ndarray
    point_ids: np.ndarray = field(default=None)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2 or data.shape[0] == 0 or data.shape[0] % 3:
            raise MalformedInputError(
                f"shape matrix must have 3F rows, got shape {data.shape}")
        ids = np.arange(data.shape[1]) if self.point_ids is None else self.point_ids
        ids = _check_perm(ids, data.shape[1], "point_ids").copy()
        ids.setflags(write=False)
        object.__setattr__(self, "data", _readonly(data))
        object.__setattr__(self, "point_ids", ids)

    @property
    def frames(self) -> int:
        return self.data.shape[0] // 3

    @property
    def points(self) -> int:
        return self.data.shape[1]

    def frame(self, f) -> np.ndarray:
        return self.data[3 * f:3 * f + 3]


@dataclass(frozen=True)
class ReshuffledShape:
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2 or data.shape[0] == 0 or data.shape[0] % 3:
            raise MalformedInputError(
                f"reshuffled shape must have 3P rows, got shape {data.shape}")
        object.__setattr__(self, "data", _readonly(data))


def reshuffle(S) -> np.ndarray:
    """Map ``3F x P`` to ``3P x F`` (a pure index permutation).

    Accepts a :class:`ShapeMatrix` or a plain array; returns an array.
    """
    S = S.data if isinstance(S, ShapeMatrix) else np.asarray(S)
    if S.ndim != 2 or S.shape[0] % 3:
        raise MalformedInputError(f"expected 3F x P matrix, got shape {S.shape}")
    F, P = S.shape[0] // 3, S.shape[1]
    return S.reshape(F, 3, P).transpose(1, 2, 0).reshape(3 * P, F)


def inverse_reshuffle(Ssharp) -> np.ndarray:
    """Map ``3P x F`` back to ``3F x P``."""
    X = Ssharp.data if isinstance(Ssharp, ReshuffledShape) else np.asarray(Ssharp)
    if X.ndim != 2 or X.shape[0] % 3:
        raise MalformedInputError(
            f"row count must be divisible by 3 (3P), got shape {X.shape}")
    P, F = X.shape[0] // 3, X.shape[1]
    return X.reshape(3, P, F).transpose(2, 0, 1).reshape(3 * F, P)


def reorder_columns(M, ordering, point_ids=None):
    """Column ``j`` of the result is column ``ordering[j]`` of ``M``.

    When ``point_ids`` is given the chart is permuted the same way and
    ``(M_new, ids_new)`` is returned; otherwise only the matrix.
    """
    M = np.asarray(M)
    idx = ordering.indices if isinstance(ordering, OrderingVector) else ordering
    idx = _check_perm(idx, M.shape[1])
    out = M[:, idx]
    if point_ids is None:
        return out
    ids = np.asarray(point_ids)[idx]
    return out, ids


def relative_permutation(prev, new) -> np.ndarray:
    """Permutation ``r`` with ``new == prev[r]`` for two absolute charts."""
    prev = _check_perm(prev, np.asarray(prev).size)
    new = _check_perm(new, prev.size)
    inv = np.empty_like(prev)
    inv[prev] = np.arange(prev.size)
    return inv[new]


def compose_orderings(steps) -> np.ndarray:
    """Running product of successive relative reorders.

    After applying ``steps[0]``, then ``steps[1]``, ... with
    :func:`reorder_columns`, column ``j`` holds original column ``result[j]``.
    """
    chart = None
    for step in steps:
        step = _check_perm(step, np.asarray(step).size)
        chart = step.copy() if chart is None else chart[step]
    if chart is None:
        raise ValueError("empty ordering history")
    return chart
