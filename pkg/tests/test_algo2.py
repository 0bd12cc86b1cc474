import numpy as np
import pytest

from grassnrsfm.algo1 import init_shape
from grassnrsfm.algo2 import (Algo2Config, ProjectedSet, choose_dtilde, constraint_matrix,
                              delta_energy, init_delta, project_grassmannians,
                              run_algorithm2, solve_delta, update_Ctilde, update_Z)
from grassnrsfm.clustering import similarity_graph
from grassnrsfm.data_model import is_permutation
from grassnrsfm.experiments import generate_scene
from grassnrsfm.kernels import nuclear_norm, psd_cholesky
from grassnrsfm.manifold import GrassmannSet, gamma_matrix

from conftest import random_orthonormal


def test_config_validation():
    with pytest.raises(ValueError):
        Algo2Config(c=1.0)
    with pytest.raises(ValueError):
        Algo2Config(tau=0.0)
    with pytest.raises(ValueError):
        Algo2Config(beta2=-1.0)


def test_choose_dtilde_examples(rng):
    Q = random_orthonormal(rng, 6, 1)
    assert choose_dtilde([Q, Q, Q], 0.97) == 1
    E = np.eye(5)
    assert choose_dtilde([E[:, [0]], E[:, [1]], E[:, [2]]], 0.97) == 3
    bases = [random_orthonormal(rng, 8, 2) for _ in range(2)]
    assert choose_dtilde(bases, 1.0) == 4
    assert choose_dtilde([Q], 0.5) >= 1
    with pytest.raises(ValueError):
        choose_dtilde([Q], 0.0)


def test_projection_selector_and_vector_cases(rng):
    d, dt = 7, 3
    delta = np.vstack([np.eye(dt), np.zeros((d - dt, dt))])
    phi = np.vstack([random_orthonormal(rng, dt, 2), np.zeros((d - dt, 2))])
    pm = project_grassmannians([phi], delta)
    theta = pm.thetas[0]
    np.testing.assert_allclose(theta.T @ theta, np.eye(2), atol=1e-12)
    P1, P2 = theta @ theta.T, phi[:dt] @ phi[:dt].T
    np.testing.assert_allclose(P1, P2, atol=1e-12)
    v = random_orthonormal(rng, d, 1)
    pm = project_grassmannians([v], rng.standard_normal((d, dt)))
    assert np.linalg.norm(pm.thetas[0]) == pytest.approx(1.0)
    assert pm.us[0][0, 0] == pytest.approx(np.linalg.norm(pm.delta.T @ v))


def test_projection_invariants_random(rng):
    d, dt = 10, 5
    bases = [random_orthonormal(rng, d, 3) for _ in range(6)]
    delta = rng.standard_normal((d, dt))
    pm = project_grassmannians(bases, delta)
    for th, om, u in zip(pm.thetas, pm.omegas, pm.us):
        np.testing.assert_allclose(th.T @ th, np.eye(3), atol=1e-10)
        np.testing.assert_allclose(delta.T @ om, th, atol=1e-10)
        assert np.all(np.diag(u) >= 0)
        np.testing.assert_allclose(np.triu(u), u)
    assert pm.regularized == ()


def test_projection_flags_rank_deficiency():
    d = 4
    delta = np.vstack([np.eye(2), np.zeros((2, 2))])
    phi = np.eye(d)[:, [2]]                         # killed by the map
    pm = project_grassmannians([phi], delta)
    assert pm.regularized == (0,)
    assert np.all(np.isfinite(pm.omegas[0]))


def _two_cluster_bases(rng, d=12, p=2, per=3):
    Q = random_orthonormal(rng, d, d)
    out = []
    for g in range(2):
        for _ in range(per):
            out.append(np.linalg.qr(Q[:, g * p:(g + 1) * p] + 0.05 * rng.standard_normal((d, p)))[0])
    return out


def test_solve_delta_beats_random_feasible(rng):
    # feasible maps share the solver's normalisation: X-orthonormal columns, unit trace
    d, dt = 12, 4
    bases = _two_cluster_bases(rng, d)
    w = similarity_graph(bases)
    pm = project_grassmannians(bases, init_delta(d, dt, seed=0))
    D, X, _ = solve_delta(pm.omegas, w, pm.delta, dt)
    assert abs(np.trace(D.T @ X @ D) - 1.0) <= 1e-10
    np.testing.assert_allclose(D.T @ X @ D, np.eye(dt) / dt, atol=1e-10)
    E = delta_energy(pm.omegas, w, D)
    xw, xv = np.linalg.eigh(X)
    keep = xw > 1e-12 * xw.max() * d
    B = xv[:, keep] / np.sqrt(xw[keep])
    for _ in range(100):
        Q = np.linalg.qr(rng.standard_normal((B.shape[1], dt)))[0]
        Z = B @ Q / np.sqrt(dt)
        assert E <= delta_energy(pm.omegas, w, Z)


def test_solve_delta_identical_points(rng):
    Q = random_orthonormal(rng, 8, 2)
    bases = [Q, Q, Q]
    w = similarity_graph(bases)
    pm = project_grassmannians(bases, init_delta(8, 3))
    D, X, vals = solve_delta(pm.omegas, w, pm.delta, 3)
    assert delta_energy(pm.omegas, w, D) == pytest.approx(0.0, abs=1e-20)
    assert abs(np.trace(D.T @ X @ D) - 1.0) <= 1e-10


def test_efficient_y_matches_pairwise_sum(rng):
    d, dt = 9, 4
    omegas = [rng.standard_normal((d, 2)) for _ in range(4)]
    w = rng.uniform(0.1, 1.0, (4, 4))
    w = 0.5 * (w + w.T)
    np.fill_diagonal(w, 0)
    Dp = rng.standard_normal((d, dt))
    A = [o @ o.T for o in omegas]
    Y = sum(0.5 * w[i, j] * (A[i] - A[j]) @ Dp @ Dp.T @ (A[i] - A[j])
            for i in range(4) for j in range(4))
    X = sum(w[i].sum() * A[i] for i in range(4))
    D, Xs, vals = solve_delta(omegas, w, Dp, dt)
    np.testing.assert_allclose(Xs, X, atol=1e-10)
    np.testing.assert_allclose(constraint_matrix(omegas, w), X, atol=1e-10)
    # D holds generalized eigenvectors of the explicit (Y, X) pencil
    E = D / np.sqrt(np.diag(D.T @ X @ D))
    assert np.linalg.norm(Y @ E - X @ E @ np.diag(vals)) <= 1e-8 * max(1.0, np.linalg.norm(Y))


def test_solve_delta_zero_constraint():
    with pytest.raises(np.linalg.LinAlgError):
        solve_delta([np.zeros((4, 1))], np.zeros((1, 1)), np.eye(4)[:, :2], 2)


def test_ctilde_and_z_updates(rng):
    thetas = [random_orthonormal(rng, 5, 2) for _ in range(4)]
    L, _ = psd_cholesky(gamma_matrix(thetas))
    Z, L2 = rng.standard_normal((4, 4)), rng.standard_normal((4, 4))
    np.testing.assert_allclose(update_Ctilde(L, Z, L2, 0.5, 0.0), Z - L2 / 0.5, atol=1e-12)
    C = update_Ctilde(L, Z, L2, 0.5, 1.0)
    G = L @ L.T
    assert np.max(np.abs(2 * (C @ G - G) + 0.5 * (C - (Z - L2 / 0.5)))) <= 1e-8
    np.testing.assert_allclose(update_Ctilde(L, Z, np.zeros((4, 4)), 1e9, 1.0), Z, atol=1e-7)
    Zn = update_Z(C, L2, 2.0, 0.3)
    M = C + L2 / 2.0
    obj = lambda X: 0.15 * nuclear_norm(X) + 0.5 * np.sum((X - M) ** 2)
    for _ in range(200):
        assert obj(Zn) <= obj(Zn + 1e-2 * rng.standard_normal(Zn.shape)) + 1e-12


def test_max_iter_zero():
    sc = generate_scene(6, 40, seed=2)
    res = run_algorithm2(sc.W, sc.R, Algo2Config(max_iter=0))
    np.testing.assert_allclose(res.S, init_shape(sc.W, sc.R))
    assert len(res.P_history) == 1


def test_run_invariants():
    sc = generate_scene(12, 150, n_groups=3, n_modes=3, seed=4)
    maps = []

    def cb(it, st):
        maps.append(st)
    res = run_algorithm2(sc.W, sc.R, Algo2Config(n_clusters=3, max_iter=15), callback=cb)
    assert res.P_store.shape == (res.n_iter + 1, 150)
    assert all(is_permutation(p, 150) for p in res.P_history)
    np.testing.assert_array_equal(res.W, sc.W[:, res.ordering])
    pm = res.projection
    for th, om in zip(pm.thetas, pm.omegas):
        np.testing.assert_allclose(th.T @ th, np.eye(th.shape[1]), atol=1e-8)
        np.testing.assert_allclose(pm.delta.T @ om, th, atol=1e-8)
    assert abs(np.trace(pm.delta.T @ pm.constraint @ pm.delta) - 1.0) <= 1e-8
    betas = [d["beta"] for d in res.diagnostics]
    np.testing.assert_allclose(betas, [min(1e-2 * 1.1 ** k, 1e8) for k in range(len(betas))])


def test_projected_set_is_not_reconstructable(rng):
    # grouping sees only the low-dimensional type; it carries no singular factors
    ps = ProjectedSet((random_orthonormal(rng, 4, 2),), (np.arange(3),))
    assert not isinstance(ps, GrassmannSet)
    assert not hasattr(ps, "points")
