"""k-means++ bootstrap grouping and spectral re-grouping of Grassmann points."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
import scipy.linalg
from scipy.optimize import linear_sum_assignment
from sklearn.cluster import kmeans_plusplus
from sklearn.utils import check_random_state

from .manifold import GrassmannSet, gamma_matrix

__all__ = [
    "ClusterResult",
    "kmeanspp",
    "similarity_graph",
    "spectral_embedding_labels",
    "spectral_order",
    "enforce_min_size_by_residual",
]


class ClusterResult(NamedTuple):
    """Labels (in the *new* column order) plus the ordering that produced them.

    ``ordering`` is absolute (index into the original columns) when a previous
    chart was supplied; ``relative`` permutes the current columns.
    """

    ordering: np.ndarray
    labels: np.ndarray
    relative: np.ndarray


def _sq_dists(X, centers):
    d = (np.einsum("ij,ij->i", X, X)[:, None] - 2.0 * X @ centers.T
         + np.einsum("ij,ij->i", centers, centers)[None, :])
    return np.maximum(d, 0.0)


def _lloyd(X, centers, max_iter, tol):
    for _ in range(max_iter):
        labels = np.argmin(_sq_dists(X, centers), axis=1)
        new = centers.copy()
        for k in range(centers.shape[0]):
            members = labels == k
            if members.any():
                new[k] = X[members].mean(axis=0)
            else:
                # reseed an empty cluster at the worst-served point
                dist = _sq_dists(X, new).min(axis=1)
                new[k] = X[int(np.argmax(dist))]
        shift = np.sqrt(np.max(np.sum((new - centers) ** 2, axis=1)))
        centers = new
        if shift < tol:
            break
    labels = np.argmin(_sq_dists(X, centers), axis=1)
    return labels, centers


def _donate_nearest(X, labels, centers, min_size):
    labels = labels.copy()
    K = centers.shape[0]
    for _ in range(X.shape[0]):
        sizes = np.bincount(labels, minlength=K)
        short = np.flatnonzero(sizes < min_size)
        if short.size == 0:
            break
        k = int(short[0])
        donors = np.isin(labels, np.flatnonzero(sizes > min_size))
        if not donors.any():
            raise ValueError("not enough columns to give every cluster the minimum size")
        cand = np.flatnonzero(donors)
        d = np.sum((X[cand] - centers[k]) ** 2, axis=1)
        labels[cand[int(np.argmin(d))]] = k
    return labels


def kmeanspp(columns, n_clusters, seed=0, min_size=1, max_iter=100, tol=1e-6):
    """k-means++ seeding plus Lloyd iterations over the columns of ``columns``.

    Parameters
    ----------
    columns : ndarray, shape (d, N)
        Each column is one sample.
    n_clusters : int
    seed : int or RandomState
    min_size : int
        Every cluster ends with at least this many members; deficient clusters
        take the nearest columns from clusters that can spare them.

    Returns
    -------
    ClusterResult
        ``ordering`` sorts columns by label (stable), ``labels`` are given in
        that sorted order.
    """
    X = np.asarray(columns, dtype=np.float64).T
    N = X.shape[0]
    if n_clusters > N:
        raise ValueError(f"cannot form {n_clusters} clusters from {N} columns")
    if n_clusters < 1:
        raise ValueError("n_clusters must be positive")
    min_size = max(int(min_size), 1)
    if n_clusters * min_size > N:
        raise ValueError(
            f"{n_clusters} clusters of at least {min_size} columns need {n_clusters * min_size} columns, have {N}")
    if n_clusters == 1:
        labels = np.zeros(N, dtype=np.int64)
    elif n_clusters == N:
        labels = np.arange(N, dtype=np.int64)
    else:
        rs = check_random_state(seed)
        centers, _ = kmeans_plusplus(X, n_clusters, random_state=rs)
        labels, centers = _lloyd(X, centers, max_iter, tol)
        labels = _donate_nearest(X, labels, centers, min_size)
    order = np.argsort(labels, kind="stable")
    return ClusterResult(order, labels[order].astype(np.int64), order)


def similarity_graph(xi, self_loops=False) -> np.ndarray:
    """``w_ij = exp(-d_g^2(Phi_i, Phi_j))`` with the projection metric."""
    bases = xi.bases if isinstance(xi, GrassmannSet) else list(xi)
    G = gamma_matrix(bases)
    dims = np.array([b.shape[1] for b in bases], dtype=np.float64)
    dist = np.maximum(0.5 * (dims[:, None] + dims[None, :]) - G, 0.0)
    Wg = np.exp(-dist)
    Wg = 0.5 * (Wg + Wg.T)
    if not self_loops:
        np.fill_diagonal(Wg, 0.0)
    return Wg


def spectral_embedding_labels(affinity, n_clusters, seed=0):
    """Normalised spectral clustering of a small symmetric affinity matrix."""
    A = np.asarray(affinity, dtype=np.float64)
    K = A.shape[0]
    labels = np.full(K, -1, dtype=np.int64)
    deg = A.sum(axis=1)
    isolated = np.flatnonzero(deg <= 1e-300)
    live = np.flatnonzero(deg > 1e-300)
    for i, node in enumerate(isolated):
        labels[node] = i
    nxt = isolated.size
    target = max(1, min(n_clusters - isolated.size, live.size))
    if live.size == 0:
        return labels
    if target == 1:
        labels[live] = nxt
        return labels
    Al = A[np.ix_(live, live)]
    dinv = 1.0 / np.sqrt(deg[live])
    Lsym = np.eye(live.size) - dinv[:, None] * Al * dinv[None, :]
    _, vecs = scipy.linalg.eigh(0.5 * (Lsym + Lsym.T), subset_by_index=[0, target - 1])
    norms = np.linalg.norm(vecs, axis=1, keepdims=True)
    emb = vecs / np.where(norms > 0, norms, 1.0)
    sub = kmeanspp(emb.T, target, seed=seed)
    sub_labels = np.empty(live.size, dtype=np.int64)
    sub_labels[sub.ordering] = sub.labels
    labels[live] = nxt + sub_labels
    return labels


def _residuals(X, cols, p):
    block = X[:, cols]
    q = min(p, block.shape[0], block.shape[1])
    U = scipy.linalg.svd(block, full_matrices=False)[0][:, :q]
    r = block - U @ (U.T @ block)
    return np.einsum("ij,ij->j", r, r)


def enforce_min_size_by_residual(X, labels, n_clusters, min_size, p):
    """Give each deficient cluster the worst-fitting column of the largest cluster."""
    labels = np.asarray(labels).copy()
    min_size = max(int(min_size), 1)
    if n_clusters * min_size > labels.size:
        raise ValueError("not enough columns for the requested minimum cluster size")
    for _ in range(labels.size):
        sizes = np.bincount(labels, minlength=n_clusters)
        short = np.flatnonzero(sizes < min_size)
        if short.size == 0:
            break
        donor = int(np.argmax(sizes))
        cols = np.flatnonzero(labels == donor)
        if X is None:
            pick = cols[-1]
        else:
            pick = cols[int(np.argmax(_residuals(X, cols, p)))]
        labels[pick] = int(short[0])
    return labels


def spectral_order(xi: GrassmannSet, C, prev_ordering=None, target_clusters=None,
                   X=None, min_size=1, p=1, seed=0) -> ClusterResult:
    """Regroup columns from a subspace-level coefficient matrix.

    The affinity ``(|C| + |C^T|) / 2`` is clustered spectrally; subspace labels
    are then broadcast to the columns each Grassmann point owns and matched to
    the previous cluster ids by maximum overlap.

    Parameters
    ----------
    xi : GrassmannSet
        Current points and their column membership (current column order).
    C : ndarray, shape (K, K)
    prev_ordering : array of int, optional
        Absolute chart of the current columns; defaults to the identity.
    target_clusters : int, optional
        Defaults to ``K``.
    X : ndarray, optional
        Current data matrix; needed only when a cluster ends up below
        ``min_size`` and must receive donated columns.
    """
    C = np.asarray(C, dtype=np.float64)
    if not np.all(np.isfinite(C)):
        raise ValueError("coefficient matrix has non-finite entries")
    K = len(xi)
    if C.shape != (K, K):
        raise ValueError(f"coefficient matrix must be {K}x{K}, got {C.shape}")
    n = xi.n_columns
    prev = np.arange(n) if prev_ordering is None else np.asarray(prev_ordering, dtype=np.int64)
    target = K if target_clusters is None else int(target_clusters)
    if K == 1:
        labels = np.zeros(n, dtype=np.int64)
        return ClusterResult(prev.copy(), labels, np.arange(n))

    A = 0.5 * (np.abs(C) + np.abs(C.T))
    sub = spectral_embedding_labels(A, target, seed=seed)
    n_new = int(sub.max()) + 1
    sizes = np.array([len(m) for m in xi.membership], dtype=np.float64)
    overlap = np.zeros((n_new, K))
    for i in range(K):
        overlap[sub[i], i] += sizes[i]
    rows, cols = linear_sum_assignment(-overlap)
    mapping = np.full(n_new, -1, dtype=np.int64)
    mapping[rows] = cols
    spare = iter(c for c in range(K) if c not in set(cols.tolist()))
    for r in range(n_new):
        if mapping[r] < 0:
            mapping[r] = next(spare)

    col_labels = np.empty(n, dtype=np.int64)
    for i, members in enumerate(xi.membership):
        col_labels[np.asarray(members, dtype=np.int64)] = mapping[sub[i]]
    col_labels = enforce_min_size_by_residual(X, col_labels, K, min_size, p)

    rel = np.argsort(col_labels, kind="stable")
    return ClusterResult(prev[rel], col_labels[rel], rel)
