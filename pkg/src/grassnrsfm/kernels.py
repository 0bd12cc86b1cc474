"""Proximal operators and small dense factorizations shared by both solvers."""

from __future__ import annotations

import numpy as np
import scipy.linalg

__all__ = [
    "soft_threshold",
    "svt",
    "nuclear_norm",
    "psd_cholesky",
    "generalized_symmetric_eig",
    "fix_column_signs",
    "CholeskyLadderError",
]


class CholeskyLadderError(np.linalg.LinAlgError):
    pass


def soft_threshold(x, tau):
    """Elementwise shrinkage ``sign(x) * max(|x| - tau, 0)``."""
    if tau < 0:
        raise ValueError(f"threshold must be nonnegative, got {tau}")
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.maximum(np.abs(x) - tau, 0.0)


def fix_column_signs(U, V=None):
    """Flip columns so the largest-magnitude entry of each column of ``U`` is positive.

    ``V`` (columns paired with ``U``'s, e.g. right singular vectors) is flipped
    alongside so ``U diag(s) V^T`` is unchanged.
    """
    if U.size == 0:
        return U if V is None else (U, V)
    rows = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[rows, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    U = U * signs
    if V is None:
        return U
    return U, V * signs


def _thin_svd(M):
    if not np.all(np.isfinite(M)):
        raise np.linalg.LinAlgError("SVD of a matrix with non-finite entries")
    try:
        return scipy.linalg.svd(M, full_matrices=False, check_finite=False,
                                lapack_driver="gesdd")
    except np.linalg.LinAlgError:
        return scipy.linalg.svd(M, full_matrices=False, check_finite=False,
                                lapack_driver="gesvd")


def svt(M, tau, return_singular_values=False):
    """Singular value thresholding, the prox of ``tau * ||.||_*``.

    Parameters
    ----------
    M : ndarray, shape (m, n)
    tau : float
        Nonnegative threshold.
    return_singular_values : bool
        Also return the thresholded singular values.
    """
    M = np.asarray(M, dtype=np.float64)
    if tau < 0:
        raise ValueError(f"threshold must be nonnegative, got {tau}")
    U, s, Vt = _thin_svd(M)
    shrunk = np.maximum(s - tau, 0.0)
    keep = shrunk > 0
    X = (U[:, keep] * shrunk[keep]) @ Vt[keep]
    if return_singular_values:
        return X, shrunk
    return X


def nuclear_norm(M) -> float:
    return float(np.sum(scipy.linalg.svdvals(np.asarray(M, dtype=np.float64))))


def psd_cholesky(gamma, delta=1e-10, max_escalations=8, sym_tol=1e-10):
    """Lower Cholesky factor of a PSD matrix, regularising only when needed.

    Tries ``gamma`` as given, then ``gamma + delta' I`` for
    ``delta' = delta, 10 delta, ...``.

    Returns
    -------
    L : ndarray
        Lower-triangular factor with ``L @ L.T == gamma + delta' I``.
    delta_used : float
    """
    G = np.asarray(gamma, dtype=np.float64)
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise ValueError("Cholesky input must be square")
    if np.max(np.abs(G - G.T), initial=0.0) > sym_tol * max(1.0, np.max(np.abs(G), initial=0.0)):
        raise ValueError("Cholesky input is not symmetric")
    G = 0.5 * (G + G.T)
    eye = np.eye(G.shape[0])
    shifts = [0.0] + [delta * 10.0 ** i for i in range(max_escalations)]
    for shift in shifts:
        try:
            L = scipy.linalg.cholesky(G + shift * eye, lower=True, check_finite=False)
        except np.linalg.LinAlgError:
            continue
        if np.all(np.isfinite(L)) and np.all(np.diag(L) > 0):
            return L, shift
    raise CholeskyLadderError(
        f"matrix not positive definite even after adding {shifts[-1]:g} I")


def generalized_symmetric_eig(Y, X, k, rtol=1e-12):
    """Eigenvectors of the pencil ``(Y, X)`` for the ``k`` smallest eigenvalues.

    The pencil is whitened on the numerical range of ``X``; directions that
    ``X`` annihilates carry no constraint mass and are only used to pad the
    result when ``rank(X) < k``.  Columns are ``X``-orthonormal before a
    single global rescale so that ``trace(D^T X D) == 1``.

    Returns
    -------
    D : ndarray, shape (d, k)
    eigvals : ndarray, shape (k,)
        Generalized eigenvalues (zero for padding columns).
    """
    Y = np.asarray(Y, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    d = X.shape[0]
    if k > d:
        raise ValueError(f"requested {k} eigenvectors of a {d}x{d} pencil")
    if k < 1:
        raise ValueError("k must be positive")
    Y = 0.5 * (Y + Y.T)
    X = 0.5 * (X + X.T)
    xw, xv = scipy.linalg.eigh(X, check_finite=False)
    top = xw.max(initial=0.0)
    if top <= 0:
        raise np.linalg.LinAlgError("constraint matrix is numerically zero")
    rng = xw > rtol * top * d
    B = xv[:, rng] / np.sqrt(xw[rng])           # X-whitening basis of range(X)
    Yw = B.T @ Y @ B
    lam, Q = scipy.linalg.eigh(0.5 * (Yw + Yw.T), check_finite=False)
    r = lam.size
    take = min(k, r)
    D = B @ Q[:, :take]
    vals = lam[:take]
    if take < k:
        null = xv[:, ~rng]
        D = np.hstack([D, null[:, :k - take]])
        vals = np.concatenate([vals, np.zeros(k - take)])
    D = fix_column_signs(D)
    mass = float(np.trace(D.T @ X @ D))
    D = D / np.sqrt(mass)
    return D, vals
