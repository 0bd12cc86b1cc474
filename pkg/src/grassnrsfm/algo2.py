"""Geometry-aware dense NRSfM (Algorithm 2).

Reconstruction uses the high-dimensional Grassmann points of the trajectory
groups; grouping uses their projection onto a low-dimensional Grassmann
manifold learned from a neighbour-weighted energy.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from .algo1 import (NonFiniteStateError, _check_finite, _reproj, _validate,
                    init_shape, permute_sharp_rows, update_C, update_J, update_S,
                    update_Ssharp)
from .clustering import kmeanspp, similarity_graph, spectral_order
from .data_model import reshuffle
from .kernels import generalized_symmetric_eig, psd_cholesky
from .manifold import (GrassmannSet, build_grassmannians, gamma_matrix,
                       reconstruct_from_grassmannians)

logger = logging.getLogger(__name__)

__all__ = [
    "Algo2Config",
    "Algo2Result",
    "ProjectionMap",
    "ProjectedSet",
    "choose_dtilde",
    "init_delta",
    "project_grassmannians",
    "solve_delta",
    "delta_energy",
    "update_Ctilde",
    "update_Z",
    "run_algorithm2",
    "NonFiniteStateError",
]


@dataclass(frozen=True)
class Algo2Config:
    """Hyperparameters of Algorithm 2.

    ``beta1..beta3`` weight the self-expression error, the nuclear norm of
    ``S#`` and the nuclear norm of ``Z``; they have no published values.
    """

    beta1: float = 1.0
    beta2: float = 1e-2
    beta3: float = 1e-2
    beta0: float = 1e-2
    beta_max: float = 1e8
    eps: float = 1e-10
    c: float = 1.1
    n_clusters: int = 1
    p: int = 3
    tau: float = 0.97
    dtilde: int | None = None
    target_clusters: int | None = None
    max_iter: int = 300
    seed: int = 0
    delta: float = 1e-10

    def __post_init__(self):
        if self.c <= 1:
            raise ValueError("c must exceed 1")
        if not self.beta0 < self.beta_max:
            raise ValueError("beta0 must be below beta_max")
        for name in ("beta1", "beta2", "beta3"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.n_clusters < 1 or self.p < 1:
            raise ValueError("n_clusters and p must be positive")
        if not 0 < self.tau <= 1:
            raise ValueError("tau must lie in (0, 1]")
        if self.max_iter < 0:
            raise ValueError("max_iter must be nonnegative")

    def with_overrides(self, **kw):
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


@dataclass(frozen=True)
class ProjectedSet:
    """Low-dimensional Grassmann points; carries no data for reconstruction."""

    bases: tuple
    membership: tuple

    def __len__(self):
        return len(self.bases)

    @property
    def n_columns(self) -> int:
        return int(sum(len(m) for m in self.membership))


@dataclass(frozen=True)
class ProjectionMap:
    """``Delta`` with the per-point QR factors it induces.

    ``thetas[i] @ us[i] == Delta.T @ Phi_i`` and ``omegas[i] = Phi_i us[i]^-1``.
    ``constraint`` is the matrix ``sum_i lambda_ii Omega_i Omega_i^T`` the
    ``Delta`` solve was normalised against (``None`` for a fixed ``Delta``).
    """

    delta: np.ndarray
    thetas: tuple
    omegas: tuple
    us: tuple
    constraint: np.ndarray = None
    regularized: tuple = ()


@dataclass
class Algo2Result:
    S: np.ndarray
    Ssharp: np.ndarray
    Ctilde: np.ndarray
    W: np.ndarray
    ordering: np.ndarray
    labels: np.ndarray
    P_history: list
    dtilde: int
    n_iter: int
    stop_reason: str
    projection: ProjectionMap = None
    diagnostics: list = field(default_factory=list)

    @property
    def P_store(self):
        return np.vstack(self.P_history)

    def shape_original_order(self) -> np.ndarray:
        out = np.empty_like(self.S)
        out[:, self.ordering] = self.S
        return out

    def labels_original_order(self) -> np.ndarray:
        out = np.empty_like(self.labels)
        out[self.ordering] = self.labels
        return out


def _bases(xi):
    return xi.bases if isinstance(xi, (GrassmannSet, ProjectedSet)) else list(xi)


def choose_dtilde(xi, tau=0.97) -> int:
    """Smallest dimension keeping a ``tau`` fraction of the stacked bases' energy."""
    if not 0 < tau <= 1:
        raise ValueError("tau must lie in (0, 1]")
    bases = _bases(xi)
    stack = np.hstack(bases)
    s = scipy.linalg.svdvals(stack)
    energy = s ** 2                                   # eigenvalues of stack @ stack.T
    energy = energy[energy > energy[0] * 1e-12 * max(stack.shape)]
    frac = np.cumsum(energy) / np.sum(energy)
    d = int(np.searchsorted(frac, tau - 1e-12) + 1)
    d = min(d, energy.size)
    return max(d, max(b.shape[1] for b in bases))


def init_delta(d, dtilde, seed=0) -> np.ndarray:
    """``[I; small uniform noise]`` starting map."""
    if dtilde > d:
        raise ValueError(f"reduced dimension {dtilde} exceeds ambient {d}")
    rng = np.random.default_rng(seed)
    return np.vstack([np.eye(dtilde), rng.uniform(-1e-3, 1e-3, size=(d - dtilde, dtilde))])


def _qr_point(delta, phi):
    A = delta.T @ phi
    Q, U = np.linalg.qr(A)
    s = np.sign(np.diag(U))
    s[s == 0] = 1.0
    Q = Q * s
    U = s[:, None] * U
    flagged = bool(np.any(np.abs(np.diag(U)) < 1e-12 * max(np.linalg.norm(A), 1e-300)))
    if flagged:
        U = U + 1e-10 * np.eye(U.shape[0])
    omega = scipy.linalg.solve_triangular(U, phi.T, trans="T", lower=False).T
    return Q, U, omega, flagged


def project_grassmannians(xi, delta, constraint=None) -> ProjectionMap:
    """QR-project each ``Phi_i`` through ``delta``: ``Theta_i U_i = delta^T Phi_i``."""
    delta = np.asarray(delta, dtype=np.float64)
    thetas, us, omegas, flags = [], [], [], []
    for i, phi in enumerate(_bases(xi)):
        if delta.shape[1] < phi.shape[1]:
            raise ValueError("reduced dimension is smaller than the subspace dimension")
        Q, U, om, flagged = _qr_point(delta, phi)
        thetas.append(Q)
        us.append(U)
        omegas.append(om)
        if flagged:
            flags.append(i)
    if flags:
        logger.debug("regularised rank-deficient projections for points %s", flags)
    return ProjectionMap(delta, tuple(thetas), tuple(omegas), tuple(us), constraint,
                         tuple(flags))


def _laplacian_blocks(weights, dims):
    lam = weights.sum(axis=1)
    Lg = np.diag(lam) - weights
    reps = np.asarray(dims)
    return np.repeat(np.repeat(Lg, reps, axis=0), reps, axis=1), lam


def constraint_matrix(omegas, weights) -> np.ndarray:
    lam = np.asarray(weights).sum(axis=1)
    Om = np.hstack(omegas)
    scale = np.repeat(lam, [o.shape[1] for o in omegas])
    return (Om * scale) @ Om.T


def solve_delta(omegas, weights, delta_prev, dtilde):
    """One generalized-eigenvalue update of the projection map.

    ``Y = sum_ij (w_ij/2) L_ij D D^T L_ij`` with ``L_ij = O_i O_i^T - O_j O_j^T``
    and ``D = delta_prev``; ``X = sum_i lambda_ii O_i O_i^T``.  Returns the
    new map, ``X`` and the generalized eigenvalues.
    """
    weights = np.asarray(weights, dtype=np.float64)
    omegas = [np.asarray(o, dtype=np.float64) for o in omegas]
    dims = [o.shape[1] for o in omegas]
    Om = np.hstack(omegas)                                   # d x sum(p)
    X = constraint_matrix(omegas, weights)
    if not np.any(X):
        raise np.linalg.LinAlgError("constraint matrix is zero: no Grassmann points")
    # sum over ordered pairs collapses to Om (Lap (x) G G^T) Om^T
    G = Om.T @ delta_prev                                    # sum(p) x dtilde
    Lrep, _ = _laplacian_blocks(weights, dims)
    H = Lrep * (G @ G.T)
    Y = Om @ H @ Om.T
    D, vals = generalized_symmetric_eig(Y, X, dtilde)
    return D, X, vals


def delta_energy(omegas, weights, delta) -> float:
    """``sum_ij (w_ij/2) ||delta^T (O_i O_i^T - O_j O_j^T) delta||_F^2``."""
    T = [(delta.T @ o) @ (delta.T @ o).T for o in omegas]
    K = len(T)
    total = 0.0
    for i in range(K):
        for j in range(K):
            if weights[i, j]:
                total += 0.5 * weights[i, j] * np.sum((T[i] - T[j]) ** 2)
    return float(total)


def update_Ctilde(chol, Z, L2, beta, beta1) -> np.ndarray:
    return update_C(chol, Z, L2, beta, beta1)


def update_Z(Ctilde, L2, beta, beta3) -> np.ndarray:
    return update_J(Ctilde, L2, beta, beta3)


def run_algorithm2(W, R_blocks, config: Algo2Config = None, callback=None) -> Algo2Result:
    """Geometry-aware dense NRSfM.

    Parameters
    ----------
    W : ndarray, shape (2F, P)
    R_blocks : ndarray, shape (F, 2, 3) or (2F, 3)
    config : Algo2Config
    callback : callable, optional
        ``callback(iteration, locals_dict)`` after each iteration.
    """
    cfg = config or Algo2Config()
    W0, R_blocks = _validate(W, R_blocks)
    F, P = W0.shape[0] // 2, W0.shape[1]
    K = cfg.n_clusters
    d = 3 * F
    p = min(cfg.p, d)
    if K * p > P:
        raise ValueError(f"{K} clusters of dimension {p} do not fit {P} points")

    S = init_shape(W0, R_blocks)
    Ssharp = reshuffle(S)
    if cfg.max_iter == 0:
        ident = np.arange(P)
        return Algo2Result(S, Ssharp, np.zeros((K, K)), W0.copy(), ident,
                           np.zeros(P, dtype=np.int64), [ident], 0, 0, "max_iter")

    boot = kmeanspp(S, K, seed=cfg.seed, min_size=p)
    Pcur = boot.ordering.copy()
    labels = boot.labels.copy()
    S = S[:, Pcur]
    Ssharp = reshuffle(S)
    Wc = W0[:, Pcur]
    xi = build_grassmannians(S, labels, K, p)
    dtilde = cfg.dtilde if cfg.dtilde is not None else choose_dtilde(xi, cfg.tau)
    dtilde = int(min(max(dtilde, p), d))
    delta = init_delta(d, dtilde, seed=cfg.seed)
    proj = project_grassmannians(xi, delta)

    Z = np.zeros((K, K))
    Ct = np.zeros((K, K))
    L1 = np.zeros_like(Ssharp)
    L2 = np.zeros((K, K))
    beta = cfg.beta0
    P_hist = [Pcur.copy()]
    diags = []
    stop = "max_iter"
    it = 0
    while it < cfg.max_iter:
        it += 1
        S = update_S(Ssharp, L1, Wc, R_blocks, beta)
        _check_finite(it, S=S)
        xi = build_grassmannians(S, labels, K, p)
        w = similarity_graph(xi)
        if K > 1:
            # refresh Omega for the current Phi under the previous map, then re-solve
            prev = project_grassmannians(xi, delta)
            delta, X, _ = solve_delta(prev.omegas, w, delta, dtilde)
            proj = project_grassmannians(xi, delta, constraint=X)
        else:
            proj = project_grassmannians(xi, delta)
        low = ProjectedSet(proj.thetas, xi.membership)
        chol, _ = psd_cholesky(gamma_matrix(list(low.bases)), cfg.delta)
        Ct = update_Ctilde(chol, Z, L2, beta, cfg.beta1)
        reorder = spectral_order(low, Ct, Pcur, target_clusters=cfg.target_clusters,
                                 X=S, min_size=p, p=p, seed=cfg.seed)
        S = reconstruct_from_grassmannians(xi, P)
        Ssharp, sv = update_Ssharp(S, L1, beta, cfg.beta2, return_singular_values=True)
        Z = update_Z(Ct, L2, beta, cfg.beta3)
        _check_finite(it, S=S, Ssharp=Ssharp, Ctilde=Ct, Z=Z, Delta=delta)

        rel = reorder.relative
        Pcur = reorder.ordering
        labels = reorder.labels
        S = S[:, rel]
        Wc = Wc[:, rel]
        Ssharp = permute_sharp_rows(Ssharp, rel)
        L1 = permute_sharp_rows(L1, rel)

        gap_s = Ssharp - reshuffle(S)
        L1 = L1 + beta * gap_s
        L2 = L2 + beta * (Ct - Z)
        _check_finite(it, L1=L1, L2=L2)
        P_hist.append(Pcur.copy())
        beta_used = beta
        beta = min(cfg.beta_max, cfg.c * beta)
        gap = max(np.max(np.abs(gap_s)), np.max(np.abs(Ct - Z)))
        diags.append({
            "iter": it,
            "maxgap": float(gap),
            "beta": float(beta_used),
            "reproj_fro": _reproj(Wc, R_blocks, S),
            "nuclear_sharp": float(np.sum(sv)),
        })
        if callback is not None:
            callback(it, {"S": S, "Ssharp": Ssharp, "Ctilde": Ct, "Z": Z, "L1": L1,
                          "L2": L2, "beta": beta, "P": Pcur, "delta": delta})
        if gap < cfg.eps:
            stop = "converged"
            break
        if beta > cfg.beta_max:
            stop = "beta_max"
            break

    logger.debug("algorithm 2 stopped after %d iterations (%s)", it, stop)
    return Algo2Result(S, Ssharp, Ct, Wc, Pcur.copy(), labels.copy(), P_hist, dtilde,
                       it, stop, proj, diags)
