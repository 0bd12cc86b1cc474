"""Grassmann points fitted to column blocks, and the projection-embedding kernel."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .kernels import fix_column_signs

__all__ = [
    "GrassmannPoint",
    "GrassmannSet",
    "fit_grassmann",
    "build_grassmannians",
    "build_spatial_grassmannians",
    "build_temporal_grassmannians",
    "reconstruct_from_grassmannians",
    "gamma_entry",
    "gamma_matrix",
    "projection_distance_sq",
    "embedding_error",
    "labels_to_membership",
]


@dataclass(frozen=True)
class GrassmannPoint:
    """Orthonormal basis of a block's dominant subspace plus its SVD factors.

    Attributes
    ----------
    basis : ndarray, shape (d, p)
    sigma : ndarray, shape (p,)
        Retained singular values, descending.
    right : ndarray, shape (m, p)
        Right singular vectors of the source block.
    """

    basis: np.ndarray
    sigma: np.ndarray
    right: np.ndarray

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    @property
    def ambient(self) -> int:
        return self.basis.shape[0]

    def reconstruct(self) -> np.ndarray:
        return (self.basis * self.sigma) @ self.right.T

    def projector(self) -> np.ndarray:
        return self.basis @ self.basis.T


@dataclass(frozen=True)
class GrassmannSet:
    """One Grassmann point per cluster; ``membership[i]`` lists its columns."""

    points: tuple
    membership: tuple

    def __post_init__(self):
        if len(self.points) != len(self.membership):
            raise ValueError("one membership list per Grassmann point required")

    def __len__(self):
        return len(self.points)

    @property
    def bases(self):
        return [pt.basis for pt in self.points]

    @property
    def n_columns(self) -> int:
        return int(sum(len(m) for m in self.membership))

    def labels(self) -> np.ndarray:
        lab = np.empty(self.n_columns, dtype=np.int64)
        for i, cols in enumerate(self.membership):
            lab[np.asarray(cols, dtype=np.int64)] = i
        return lab


def fit_grassmann(block, p) -> GrassmannPoint:
    """Top-``p`` SVD of a ``d x m`` block."""
    block = np.asarray(block, dtype=np.float64)
    d, m = block.shape
    if not 1 <= p <= min(d, m):
        raise ValueError(f"subspace dimension {p} out of range for a {d}x{m} block")
    U, s, Vt = scipy.linalg.svd(block, full_matrices=False, check_finite=False)
    U, V = fix_column_signs(U[:, :p], Vt[:p].T)
    return GrassmannPoint(U, s[:p].copy(), V)


def labels_to_membership(labels, n_clusters):
    labels = np.asarray(labels)
    return tuple(np.flatnonzero(labels == k) for k in range(n_clusters))


def build_grassmannians(X, labels, n_clusters, p) -> GrassmannSet:
    """Fit a Grassmann point to each cluster's columns of ``X``.

    ``p`` is clamped per cluster to ``min(p, m_i, d)``.
    """
    X = np.asarray(X, dtype=np.float64)
    membership = labels_to_membership(labels, n_clusters)
    points = []
    for i, cols in enumerate(membership):
        if cols.size == 0:
            raise ValueError(f"cluster {i} is empty")
        pi = min(p, cols.size, X.shape[0])
        points.append(fit_grassmann(X[:, cols], pi))
    return GrassmannSet(tuple(points), membership)


def build_spatial_grassmannians(S, labels, n_clusters, p) -> GrassmannSet:
    """Grassmann points over trajectory groups (columns of ``S``, d = 3F)."""
    return build_grassmannians(S, labels, n_clusters, p)


def build_temporal_grassmannians(Ssharp, labels, n_clusters, p) -> GrassmannSet:
    """Grassmann points over frame groups (columns of ``S#``, d = 3P)."""
    return build_grassmannians(Ssharp, labels, n_clusters, p)


def reconstruct_from_grassmannians(xi: GrassmannSet, n_columns=None) -> np.ndarray:
    """Place ``basis @ diag(sigma) @ right.T`` back at each cluster's columns."""
    n = xi.n_columns if n_columns is None else n_columns
    d = xi.points[0].ambient
    out = np.zeros((d, n))
    for pt, cols in zip(xi.points, xi.membership):
        out[:, cols] = pt.reconstruct()
    return out


def _basis(phi):
    return phi.basis if isinstance(phi, GrassmannPoint) else np.asarray(phi, dtype=np.float64)


def gamma_entry(phi_i, phi_j) -> float:
    """``trace((Phi_j^T Phi_i)(Phi_i^T Phi_j))``, i.e. ``||Phi_i^T Phi_j||_F^2``."""
    A, B = _basis(phi_i), _basis(phi_j)
    if A.shape != B.shape:
        raise ValueError(f"basis shapes differ: {A.shape} vs {B.shape}")
    M = A.T @ B
    return float(np.sum(M * M))


def gamma_matrix(xi) -> np.ndarray:
    """Gram matrix of the vectorised projectors of every point in ``xi``."""
    bases = xi.bases if isinstance(xi, GrassmannSet) else [_basis(b) for b in xi]
    # bases clamped to different p still have well-defined projector inner products
    if len({b.shape[0] for b in bases}) > 1:
        raise ValueError("all bases must share the ambient dimension")
    K = len(bases)
    G = np.empty((K, K))
    for i in range(K):
        for j in range(i, K):
            M = bases[i].T @ bases[j]
            G[i, j] = G[j, i] = np.sum(M * M)
    return G


def projection_distance_sq(phi_i, phi_j) -> float:
    """Projection metric ``0.5 ||Phi_i Phi_i^T - Phi_j Phi_j^T||_F^2``."""
    A, B = _basis(phi_i), _basis(phi_j)
    if A.shape[0] != B.shape[0]:
        raise ValueError("bases live in different ambient spaces")
    M = A.T @ B
    return 0.5 * (A.shape[1] + B.shape[1]) - float(np.sum(M * M))


def embedding_error(xi, C) -> float:
    """Self-expression error ``sum_i ||Pi_i - sum_j c_ij Pi_j||_F^2`` via the kernel."""
    G = gamma_matrix(xi)
    C = np.asarray(C, dtype=np.float64)
    return float(np.trace(G) - 2.0 * np.trace(C @ G) + np.trace(C @ G @ C.T))
