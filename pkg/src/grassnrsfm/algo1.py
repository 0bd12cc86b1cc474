"""Joint spatial-temporal Grassmannian ADMM for dense NRSfM (Algorithm 1)."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from .clustering import kmeanspp, spectral_order
from .data_model import inverse_reshuffle, reshuffle
from .kernels import psd_cholesky, svt
from .manifold import (build_grassmannians, gamma_matrix,
                       reconstruct_from_grassmannians)

logger = logging.getLogger(__name__)

__all__ = [
    "Algo1Config",
    "Algo1State",
    "Algo1Result",
    "NonFiniteStateError",
    "init_shape",
    "update_S",
    "update_Ssharp",
    "update_C",
    "update_J",
    "update_Cs",
    "update_Ct",
    "update_Js",
    "update_Jt",
    "permute_sharp_rows",
    "run_algorithm1",
]


class NonFiniteStateError(FloatingPointError):
    def __init__(self, iteration, name):
        super().__init__(f"non-finite values in {name} at iteration {iteration}")
        self.iteration = iteration
        self.name = name


@dataclass(frozen=True)
class Algo1Config:
    """Hyperparameters of Algorithm 1.

    The objective weights have no published values; the defaults are tuning
    choices, not reference settings.
    """

    lambda1: float = 1.0
    lambda2: float = 1.0
    lambda3: float = 1e-2
    lambda4: float = 1e-2
    gamma: float = 1e-2
    rho: float = 1.1
    beta0: float = 1e-3
    beta_max: float = 1e6
    eps: float = 1e-12
    n_spatial: int = 1
    n_temporal: int = 1
    p_spatial: int = 3
    p_temporal: int = 3
    max_iter: int = 300
    seed: int = 0
    delta: float = 1e-10

    def __post_init__(self):
        if self.rho <= 1:
            raise ValueError("rho must exceed 1")
        if not self.beta0 < self.beta_max:
            raise ValueError("beta0 must be below beta_max")
        for name in ("lambda1", "lambda2", "lambda3", "lambda4", "gamma"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        for name in ("n_spatial", "n_temporal", "p_spatial", "p_temporal"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if self.max_iter < 0:
            raise ValueError("max_iter must be nonnegative")

    def with_overrides(self, **kw):
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


@dataclass
class Algo1State:
    S: np.ndarray
    Ssharp: np.ndarray
    Cs: np.ndarray
    Ct: np.ndarray
    Js: np.ndarray
    Jt: np.ndarray
    L1: np.ndarray
    L2: np.ndarray
    L3: np.ndarray
    beta: float
    Ps: np.ndarray
    Pt: np.ndarray
    labels_s: np.ndarray
    labels_t: np.ndarray
    chol_s: np.ndarray
    chol_t: np.ndarray
    W: np.ndarray
    xi_s: object = None
    xi_t: object = None


@dataclass
class Algo1Result:
    """Output of :func:`run_algorithm1`.

    ``S`` and ``W`` are in the solver's final column order; ``ordering``
    (``P_history[-1]``) maps each column to its original point id.
    """

    S: np.ndarray
    Ssharp: np.ndarray
    Cs: np.ndarray
    Ct: np.ndarray
    W: np.ndarray
    ordering: np.ndarray
    labels: np.ndarray
    temporal_labels: np.ndarray
    P_history: list
    Pt_history: list
    n_iter: int
    stop_reason: str
    diagnostics: list = field(default_factory=list)

    def shape_original_order(self) -> np.ndarray:
        out = np.empty_like(self.S)
        out[:, self.ordering] = self.S
        return out

    def labels_original_order(self) -> np.ndarray:
        out = np.empty_like(self.labels)
        out[self.ordering] = self.labels
        return out


# -- closed-form sub-solutions ---------------------------------------------

def init_shape(W, R_blocks) -> np.ndarray:
    """``pinv(R) W`` frame by frame."""
    R_blocks = np.asarray(R_blocks, dtype=np.float64)
    F = R_blocks.shape[0]
    P = W.shape[1]
    pinv = np.linalg.pinv(R_blocks)                       # (F, 3, 2)
    return np.einsum("fij,fjp->fip", pinv, W.reshape(F, 2, P)).reshape(3 * F, P)


def update_S(Ssharp, L1, W, R_blocks, beta) -> np.ndarray:
    """Minimiser of ``0.5||W - RS||^2 + beta/2 ||S - f^-1(S# + L1/beta)||^2``.

    ``R^T R + beta I`` is block diagonal, so each frame is a 3x3 solve.
    """
    R_blocks = np.asarray(R_blocks, dtype=np.float64)
    F = R_blocks.shape[0]
    P = W.shape[1]
    target = inverse_reshuffle(beta * Ssharp + L1).reshape(F, 3, P)
    rhs = target + np.einsum("fji,fjp->fip", R_blocks, W.reshape(F, 2, P))
    A = np.einsum("fji,fjk->fik", R_blocks, R_blocks) + beta * np.eye(3)
    return np.linalg.solve(A, rhs).reshape(3 * F, P)


def update_Ssharp(S, L1, beta, weight, return_singular_values=False):
    """``svt(f(S) - L1/beta, weight/beta)``."""
    return svt(reshuffle(S) - L1 / beta, weight / beta,
               return_singular_values=return_singular_values)


def update_C(chol, J, Lmult, beta, lam) -> np.ndarray:
    """``(2 lam G + beta J - Lmult)(2 lam G + beta I)^-1`` with ``G = chol chol^T``."""
    G = chol @ chol.T
    K = G.shape[0]
    A = 2.0 * lam * G + beta * np.eye(K)
    B = 2.0 * lam * G + beta * J - Lmult
    # C A = B with A symmetric PD  <=>  A C^T = B^T
    return scipy.linalg.solve(A, B.T, assume_a="pos").T


def update_J(C, Lmult, beta, lam) -> np.ndarray:
    return svt(C + Lmult / beta, lam / beta)


def update_Cs(state: Algo1State, cfg: Algo1Config) -> np.ndarray:
    return update_C(state.chol_s, state.Js, state.L2, state.beta, cfg.lambda1)


def update_Ct(state: Algo1State, cfg: Algo1Config) -> np.ndarray:
    return update_C(state.chol_t, state.Jt, state.L3, state.beta, cfg.lambda2)


def update_Js(state: Algo1State, cfg: Algo1Config) -> np.ndarray:
    return update_J(state.Cs, state.L2, state.beta, cfg.lambda3)


def update_Jt(state: Algo1State, cfg: Algo1Config) -> np.ndarray:
    return update_J(state.Ct, state.L3, state.beta, cfg.lambda4)


def permute_sharp_rows(X, rel):
    """Apply a column permutation of ``S`` to the matching rows of ``S#``."""
    P = rel.size
    return X.reshape(3, P, -1)[:, rel, :].reshape(3 * P, -1)


def _check_finite(it, **arrays):
    for name, a in arrays.items():
        if not np.all(np.isfinite(a)):
            raise NonFiniteStateError(it, name)


def _sharp_nuclear(X):
    ev = np.linalg.eigvalsh(X.T @ X)
    return float(np.sum(np.sqrt(np.maximum(ev, 0.0))))


def _reproj(W, R_blocks, S):
    F = R_blocks.shape[0]
    RS = np.einsum("fij,fjp->fip", R_blocks, S.reshape(F, 3, -1)).reshape(2 * F, -1)
    return float(np.linalg.norm(W - RS))


def _validate(W, R_blocks):
    W = np.asarray(W, dtype=np.float64)
    R_blocks = np.asarray(R_blocks, dtype=np.float64)
    if R_blocks.ndim == 2:
        R_blocks = R_blocks.reshape(-1, 2, 3)
    if W.ndim != 2 or W.shape[0] % 2:
        raise ValueError(f"W must be 2F x P, got shape {W.shape}")
    if R_blocks.shape[0] != W.shape[0] // 2:
        raise ValueError(
            f"W has {W.shape[0] // 2} frames but R has {R_blocks.shape[0]} blocks")
    return W, R_blocks


def run_algorithm1(W, R_blocks, config: Algo1Config = None, callback=None) -> Algo1Result:
    """Dense NRSfM with spatial and temporal Grassmannian self-expression.

    Parameters
    ----------
    W : ndarray, shape (2F, P)
    R_blocks : ndarray, shape (F, 2, 3) or (2F, 3)
    config : Algo1Config
    callback : callable, optional
        ``callback(iteration, state)`` after each iteration.
    """
    cfg = config or Algo1Config()
    W0, R_blocks = _validate(W, R_blocks)
    F, P = W0.shape[0] // 2, W0.shape[1]
    if cfg.n_spatial * min(cfg.p_spatial, 3 * F) > P:
        raise ValueError(f"{cfg.n_spatial} spatial clusters do not fit {P} points")
    if cfg.n_temporal * min(cfg.p_temporal, 3 * P) > F:
        raise ValueError(f"{cfg.n_temporal} temporal clusters do not fit {F} frames")

    S = init_shape(W0, R_blocks)
    Ssharp = reshuffle(S)
    identity_P = np.arange(P)
    if cfg.max_iter == 0:
        return Algo1Result(S, Ssharp, np.zeros((cfg.n_spatial,) * 2),
                           np.zeros((cfg.n_temporal,) * 2), W0.copy(), identity_P,
                           np.zeros(P, dtype=np.int64), np.zeros(F, dtype=np.int64),
                           [identity_P], [np.arange(F)], 0, "max_iter")

    tb = kmeanspp(Ssharp, cfg.n_temporal, seed=cfg.seed, min_size=cfg.p_temporal)
    labels_t = np.empty(F, dtype=np.int64)
    labels_t[tb.ordering] = tb.labels                      # frames stay in place
    sb = kmeanspp(S, cfg.n_spatial, seed=cfg.seed, min_size=cfg.p_spatial)
    Ps = sb.ordering.copy()
    S = S[:, Ps]
    Ssharp = reshuffle(S)
    Wc = W0[:, Ps]

    xi_s = build_grassmannians(S, sb.labels, cfg.n_spatial, cfg.p_spatial)
    xi_t = build_grassmannians(Ssharp, labels_t, cfg.n_temporal, cfg.p_temporal)
    chol_s, _ = psd_cholesky(gamma_matrix(xi_s), cfg.delta)
    chol_t, _ = psd_cholesky(gamma_matrix(xi_t), cfg.delta)
    Ks, Kt = cfg.n_spatial, cfg.n_temporal
    st = Algo1State(
        S=S, Ssharp=Ssharp,
        Cs=np.zeros((Ks, Ks)), Ct=np.zeros((Kt, Kt)),
        Js=np.zeros((Ks, Ks)), Jt=np.zeros((Kt, Kt)),
        L1=np.zeros_like(Ssharp), L2=np.zeros((Ks, Ks)), L3=np.zeros((Kt, Kt)),
        beta=cfg.beta0, Ps=Ps, Pt=tb.ordering.copy(),
        labels_s=sb.labels.copy(), labels_t=labels_t,
        chol_s=chol_s, chol_t=chol_t, W=Wc, xi_s=xi_s, xi_t=xi_t)

    P_hist = [st.Ps.copy()]
    Pt_hist = [st.Pt.copy()]
    diags = []
    stop = "max_iter"
    it = 0
    while it < cfg.max_iter:
        it += 1
        st.S = update_S(st.Ssharp, st.L1, st.W, R_blocks, st.beta)
        _check_finite(it, S=st.S)
        st.Cs = update_Cs(st, cfg)
        st.xi_s = build_grassmannians(st.S, st.labels_s, Ks, cfg.p_spatial)
        st.S = reconstruct_from_grassmannians(st.xi_s, P)
        st.Js = update_Js(st, cfg)
        st.Ssharp = update_Ssharp(st.S, st.L1, st.beta, cfg.gamma)
        st.Ct = update_Ct(st, cfg)
        st.xi_t = build_grassmannians(st.Ssharp, st.labels_t, Kt, cfg.p_temporal)
        st.Ssharp = reconstruct_from_grassmannians(st.xi_t, F)
        st.Jt = update_Jt(st, cfg)
        _check_finite(it, S=st.S, Ssharp=st.Ssharp, Cs=st.Cs, Ct=st.Ct,
                      Js=st.Js, Jt=st.Jt)

        st.chol_s, _ = psd_cholesky(gamma_matrix(st.xi_s), cfg.delta)
        st.chol_t, _ = psd_cholesky(gamma_matrix(st.xi_t), cfg.delta)

        rs = spectral_order(st.xi_s, st.Cs, st.Ps, X=st.S, min_size=cfg.p_spatial,
                            p=cfg.p_spatial, seed=cfg.seed)
        rt = spectral_order(st.xi_t, st.Ct, st.Pt, X=st.Ssharp, min_size=cfg.p_temporal,
                            p=cfg.p_temporal, seed=cfg.seed)
        # frames are grouped logically; only the chart of frame ids moves
        st.Pt = rt.ordering
        new_lt = np.empty(F, dtype=np.int64)
        new_lt[rt.ordering] = rt.labels
        st.labels_t = new_lt

        rel = rs.relative
        st.Ps = rs.ordering
        st.labels_s = rs.labels
        st.S = st.S[:, rel]
        st.W = st.W[:, rel]
        st.Ssharp = permute_sharp_rows(st.Ssharp, rel)
        st.L1 = permute_sharp_rows(st.L1, rel)

        gap_s = st.Ssharp - reshuffle(st.S)
        st.L1 = st.L1 + st.beta * gap_s
        st.L2 = st.L2 + st.beta * (st.Cs - st.Js)
        st.L3 = st.L3 + st.beta * (st.Ct - st.Jt)
        _check_finite(it, L1=st.L1, L2=st.L2, L3=st.L3)
        beta_used = st.beta
        st.beta = min(cfg.rho * st.beta, cfg.beta_max)

        maxgap = max(np.max(np.abs(gap_s)), np.max(np.abs(st.Cs - st.Js)),
                     np.max(np.abs(st.Ct - st.Jt)))
        P_hist.append(st.Ps.copy())
        Pt_hist.append(st.Pt.copy())
        diags.append({
            "iter": it,
            "maxgap": float(maxgap),
            "beta": float(beta_used),
            "reproj_fro": _reproj(st.W, R_blocks, st.S),
            "nuclear_sharp": _sharp_nuclear(st.Ssharp),
        })
        if callback is not None:
            callback(it, st)
        if maxgap < cfg.eps:
            stop = "converged"
            break
        if st.beta > cfg.beta_max:
            stop = "beta_max"
            break

    logger.debug("algorithm 1 stopped after %d iterations (%s)", it, stop)
    return Algo1Result(st.S, st.Ssharp, st.Cs, st.Ct, st.W, st.Ps.copy(),
                       st.labels_s.copy(), st.labels_t.copy(), P_hist, Pt_hist,
                       it, stop, diags)
