import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from grassnrsfm.kernels import (CholeskyLadderError, generalized_symmetric_eig,
                                nuclear_norm, psd_cholesky, soft_threshold, svt)


@pytest.mark.parametrize("x, tau, want", [(3, 2, 1), (-3, 2, -1), (0.5, 2, 0)])
def test_soft_threshold_scalars(x, tau, want):
    assert soft_threshold(x, tau) == want


def test_soft_threshold_rejects_negative():
    with pytest.raises(ValueError):
        soft_threshold(1.0, -0.1)


def test_svt_diagonal_and_identity(rng):
    np.testing.assert_allclose(svt(np.diag([3.0, 1.0]), 2.0), np.diag([1.0, 0.0]), atol=1e-12)
    M = rng.standard_normal((6, 4))
    np.testing.assert_allclose(svt(M, 0.0), M, atol=1e-10)
    with pytest.raises(ValueError):
        svt(M, -1.0)
    with pytest.raises(np.linalg.LinAlgError):
        svt(np.array([[np.inf, 0.0]]), 1.0)


def _prox_obj(X, M, tau):
    return tau * nuclear_norm(X) + 0.5 * np.sum((X - M) ** 2)


def test_svt_beats_random_perturbations(rng):
    M = rng.standard_normal((5, 4))
    tau = 0.3
    X = svt(M, tau)
    best = _prox_obj(X, M, tau)
    for _ in range(200):
        Z = X + rng.standard_normal(X.shape) * rng.choice([1e-4, 1e-2, 1e-1])
        assert best <= _prox_obj(Z, M, tau) + 1e-12


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 8), st.integers(1, 8), st.floats(0.0, 3.0), st.integers(0, 10**6))
def test_svt_properties(m, n, tau, seed):
    r = np.random.default_rng(seed)
    A, B = r.standard_normal((m, n)), r.standard_normal((m, n))
    SA, SB = svt(A, tau), svt(B, tau)
    assert np.linalg.norm(SA - SB) <= np.linalg.norm(A - B) + 1e-10
    assert nuclear_norm(SA) <= nuclear_norm(A) + 1e-10
    s = np.linalg.svd(A, compute_uv=False)
    assert np.linalg.matrix_rank(SA, tol=1e-9) == int(np.sum(s - tau > 1e-9))


def test_cholesky_examples():
    L, shift = psd_cholesky(np.eye(3))
    np.testing.assert_allclose(L, np.eye(3))
    assert shift == 0.0
    L, _ = psd_cholesky(np.array([[4.0, 2.0], [2.0, 2.0]]))
    np.testing.assert_allclose(L, [[2.0, 0.0], [1.0, 1.0]])
    L, shift = psd_cholesky(np.zeros((2, 2)), delta=1e-10)
    assert shift == 1e-10
    np.testing.assert_allclose(L @ L.T, 1e-10 * np.eye(2), rtol=1e-12, atol=0)


def test_cholesky_ladder_escalates_and_fails():
    G = np.array([[1.0, 1.0], [1.0, 1.0]]) - 1e-7 * np.eye(2)   # slightly indefinite
    L, shift = psd_cholesky(G)
    assert shift >= 1e-7
    np.testing.assert_allclose(L @ L.T, G + shift * np.eye(2), atol=1e-8 * (1 + np.linalg.norm(G)))
    with pytest.raises(CholeskyLadderError):
        psd_cholesky(-np.eye(2))
    with pytest.raises(ValueError):
        psd_cholesky(np.array([[1.0, 0.5], [0.0, 1.0]]))


def test_cholesky_reconstruction_random_psd(rng):
    for _ in range(20):
        A = rng.standard_normal((6, 3))
        G = A @ A.T                                   # rank-deficient PSD
        L, shift = psd_cholesky(G)
        assert np.linalg.norm(L @ L.T - (G + shift * np.eye(6))) <= 1e-8 * (1 + np.linalg.norm(G))


def test_generalized_eig_diagonal_pencil():
    D, vals = generalized_symmetric_eig(np.diag([1.0, 2.0]), np.eye(2), 1)
    np.testing.assert_allclose(np.abs(D[:, 0]), [1.0, 0.0], atol=1e-12)
    assert vals[0] == pytest.approx(1.0)


def test_generalized_eig_zero_y(rng):
    A = rng.standard_normal((4, 4))
    X = A @ A.T + np.eye(4)
    D, vals = generalized_symmetric_eig(np.zeros((4, 4)), X, 2)
    assert np.trace(D.T @ np.zeros((4, 4)) @ D) == 0.0
    assert np.trace(D.T @ X @ D) == pytest.approx(1.0, abs=1e-10)


def test_generalized_eig_matches_dense_oracle(rng):
    A, B = rng.standard_normal((6, 6)), rng.standard_normal((6, 6))
    Y, X = A @ A.T, B @ B.T + 0.5 * np.eye(6)
    D, vals = generalized_symmetric_eig(Y, X, 2)
    ref = scipy.linalg.eigh(Y, X, eigvals_only=True)
    np.testing.assert_allclose(vals, ref[:2], rtol=1e-9)
    # undo the global rescale before checking the eigen-residual
    scale = np.sqrt(np.diag(D.T @ X @ D))
    E = D / scale
    assert np.linalg.norm(Y @ E - X @ E @ np.diag(vals)) <= 1e-8
    np.testing.assert_allclose(E.T @ X @ E, np.eye(2), atol=1e-9)
    assert abs(np.trace(D.T @ X @ D) - 1.0) <= 1e-10


def test_generalized_eig_singular_x_and_errors(rng):
    U = np.linalg.qr(rng.standard_normal((5, 3)))[0]
    X = U @ U.T
    Y = np.diag(np.arange(1.0, 6.0))
    D, _ = generalized_symmetric_eig(Y, X, 2)
    assert abs(np.trace(D.T @ X @ D) - 1.0) <= 1e-10
    # columns stay in range(X)
    np.testing.assert_allclose(X @ np.linalg.pinv(X) @ D, D, atol=1e-9)
    with pytest.raises(ValueError):
        generalized_symmetric_eig(Y, np.eye(5), 6)
    with pytest.raises(np.linalg.LinAlgError):
        generalized_symmetric_eig(Y, np.zeros((5, 5)), 1)
