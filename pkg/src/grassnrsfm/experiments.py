"""Synthetic scenes with planted structure, noise injection, metrics and sweeps."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, replace

import numpy as np
from scipy.spatial.transform import Rotation
from scipy.stats import spearmanr

from .algo1 import Algo1Config, run_algorithm1
from .algo2 import Algo2Config, run_algorithm2
from .data_model import RotationStack, is_permutation, reshuffle

__all__ = [
    "SyntheticScene",
    "generate_scene",
    "random_rotations",
    "add_noise",
    "e3d",
    "label_agreement",
    "run_solver",
    "datafit_sweep",
    "ablation_run",
    "singular_count_sweep",
    "noise_sweep",
    "table_to_csv",
    "spearman",
    "NOISE_LEVELS",
    "FACE_REFERENCE_E3D",
    "load_sequence",
    "weight_grid",
    "grid_search",
]

NOISE_LEVELS = tuple(np.round(np.arange(0.01, 0.0551, 0.005), 3))

# published Algorithm 1 errors on the four synthetic face sequences
FACE_REFERENCE_E3D = {1: 0.0443, 2: 0.0381, 3: 0.0294, 4: 0.0309}


@dataclass(frozen=True)
class SyntheticScene:
    S_gt: np.ndarray          # 3F x P
    R: np.ndarray             # (F, 2, 3)
    W: np.ndarray             # 2F x P
    planted_labels: np.ndarray
    n_modes: int
    group_bases: tuple        # orthonormal 3F x p_true bases, one per group

    @property
    def frames(self):
        return self.R.shape[0]

    @property
    def points(self):
        return self.W.shape[1]


def random_rotations(F, seed=0) -> np.ndarray:
    """Top two rows of ``F`` uniformly random 3D rotations."""
    mats = Rotation.random(F, random_state=np.random.default_rng(seed)).as_matrix()
    return np.ascontiguousarray(mats[:, :2, :])


def _time_modes(F, n_modes):
    f = np.arange(F) + 0.5
    cols = [np.ones(F)]
    for k in range(1, n_modes):
        cols.append(np.sqrt(2.0) * np.cos(np.pi * k * f / F))
    return np.stack(cols, axis=1)       # F x n_modes, columns have unit RMS


def generate_scene(F, P, n_groups=1, p_true=3, n_modes=1, deform_scale=1.0, seed=0,
                   orthogonal=False, spread=0.25, separation=3.0, center=True) -> SyntheticScene:
    """Sample a scene whose trajectories follow a union of planted subspaces.

    Every trajectory lies in ``V = span{c_k (x) e_a}`` built from ``n_modes``
    smooth time profiles ``c_k`` (``c_0`` constant) and the three axes, so
    ``rank(S#) <= n_modes``.  Group ``g`` owns a ``p_true``-dimensional
    subspace of ``V``; with ``orthogonal=True`` the group subspaces are
    mutually orthogonal slices of one orthonormal basis of ``V``.  Points of a
    group share a mean coefficient vector (``separation`` apart) plus
    isotropic ``spread``, so groups are spatially coherent.

    ``deform_scale`` scales every non-constant mode; zero gives a rigid scene.
    With ``center`` (the default) every frame is shifted to zero mean, which
    the translation-free camera model expects.  Centering moves each group
    off its planted subspace by the common mean trajectory, so exact subspace
    checks need ``center=False``.
    """
    if min(F, P, n_groups, p_true, n_modes) < 1:
        raise ValueError("all scene sizes must be positive")
    if n_modes > F:
        raise ValueError(f"{n_modes} time modes need at least {n_modes} frames")
    dimV = 3 * n_modes
    if p_true > dimV:
        raise ValueError(f"p_true={p_true} exceeds the {dimV}-dim low-rank trajectory space")
    if orthogonal and n_groups * p_true > dimV:
        raise ValueError("orthogonal groups need n_groups * p_true <= 3 * n_modes")
    if P < n_groups * p_true:
        raise ValueError("too few points for the planted groups")
    rng = np.random.default_rng(seed)

    T = _time_modes(F, n_modes)
    # basis of V: column (k, a) is c_k kron e_a, reordered to row layout 3f + a
    Vb = np.einsum("fk,ab->fakb", T, np.eye(3)).reshape(3 * F, n_modes * 3)
    Vq, _ = np.linalg.qr(Vb)
    if orthogonal:
        Q, _ = np.linalg.qr(rng.standard_normal((dimV, dimV)))
        coords = [Q[:, g * p_true:(g + 1) * p_true] for g in range(n_groups)]
    else:
        coords = [np.linalg.qr(rng.standard_normal((dimV, p_true)))[0]
                  for _ in range(n_groups)]
    bases = tuple(Vq @ c for c in coords)

    sizes = np.full(n_groups, P // n_groups)
    sizes[: P % n_groups] += 1
    labels = np.repeat(np.arange(n_groups), sizes)
    scale = np.sqrt(F)          # trajectories get per-frame magnitude ~1
    S = np.empty((3 * F, P))
    for g, B in enumerate(bases):
        idx = np.flatnonzero(labels == g)
        mean = rng.standard_normal(p_true)
        mean *= separation / np.linalg.norm(mean)
        a = mean[:, None] + spread * rng.standard_normal((p_true, idx.size))
        S[:, idx] = scale * (B @ a) / np.sqrt(p_true)

    if deform_scale != 1.0:
        # project each trajectory on the modes and damp the non-constant ones
        coef = np.linalg.lstsq(Vb, S, rcond=None)[0]
        w = np.repeat(np.r_[1.0, np.full(n_modes - 1, deform_scale)], 3)
        S = Vb @ (w[:, None] * coef)
    if center:
        S = S - S.mean(axis=1, keepdims=True)

    R = random_rotations(F, seed=seed + 7919)
    W = RotationStack(R).project(S)
    return SyntheticScene(S, R, W, labels, n_modes, bases)


def add_noise(W, lambda_g, seed=0) -> np.ndarray:
    """Gaussian noise with standard deviation ``lambda_g * max|W|``."""
    W = np.asarray(W, dtype=np.float64)
    if lambda_g == 0:
        return W.copy()
    sigma = lambda_g * np.max(np.abs(W))
    return W + sigma * np.random.default_rng(seed).standard_normal(W.shape)


def _chart(P_history, P):
    if P_history is None:
        return np.arange(P)
    if isinstance(P_history, np.ndarray) and P_history.ndim == 1:
        rows = [P_history]
    else:
        rows = list(P_history)
    for r in rows:
        if not is_permutation(np.asarray(r), P):
            raise ValueError("ordering history row is not a permutation")
    return np.asarray(rows[-1])


def _frame_errors(S_est, S_gt):
    F = S_gt.shape[0] // 3
    diff = (S_est - S_gt).reshape(F, -1)
    ref = S_gt.reshape(F, -1)
    den = np.linalg.norm(ref, axis=1)
    if np.any(den == 0):
        raise ValueError("ground-truth frame with zero norm")
    return np.linalg.norm(diff, axis=1) / den


def e3d(S_est, S_gt, P_history=None, per_frame_flip=False) -> float:
    """Mean per-frame relative Frobenius error after undoing column reorders.

    ``P_history`` holds the absolute column charts recorded by a solver (one
    row per iteration); the last row maps estimated columns to point ids.
    The depth sign is resolved by one global Z flip, or per frame when
    ``per_frame_flip`` is set.
    """
    S_est = np.asarray(S_est, dtype=np.float64)
    S_gt = np.asarray(S_gt, dtype=np.float64)
    if S_est.shape != S_gt.shape or S_gt.shape[0] % 3:
        raise ValueError(f"shape mismatch: {S_est.shape} vs {S_gt.shape}")
    P = S_gt.shape[1]
    chart = _chart(P_history, P)
    aligned = np.empty_like(S_est)
    aligned[:, chart] = S_est
    flipped = aligned.copy()
    flipped[2::3] *= -1.0
    e0 = _frame_errors(aligned, S_gt)
    e1 = _frame_errors(flipped, S_gt)
    if per_frame_flip:
        return float(np.mean(np.minimum(e0, e1)))
    return float(min(e0.mean(), e1.mean()))


def label_agreement(labels, planted) -> float:
    """Best-permutation agreement fraction between two labelings."""
    from scipy.optimize import linear_sum_assignment

    labels = np.asarray(labels)
    planted = np.asarray(planted)
    a = np.unique(labels, return_inverse=True)[1]
    b = np.unique(planted, return_inverse=True)[1]
    M = np.zeros((a.max() + 1, b.max() + 1))
    np.add.at(M, (a, b), 1)
    r, c = linear_sum_assignment(-M)
    return float(M[r, c].sum() / labels.size)


def run_solver(algo, W, R, config):
    """Run Algorithm 1 or 2; returns the solver's result object."""
    if int(algo) == 1:
        return run_algorithm1(W, R, config if config is not None else Algo1Config())
    if int(algo) == 2:
        return run_algorithm2(W, R, config if config is not None else Algo2Config())
    raise ValueError(f"unknown algorithm {algo!r}")


def _result_e3d(res, S_gt):
    return e3d(res.S, S_gt, res.P_history)


def _reproj(W, R, S):
    return float(np.linalg.norm(W - RotationStack(R).project(S)))


def datafit_sweep(W, R, S_gt, K_list, algo=1, config=None, field="p_spatial"):
    """Data fit ``||W - RS||_F`` and ground-truth fit ``||S_gt - S||_F`` per rank.

    Each ``K`` is written into ``config.<field>`` (the per-cluster subspace
    rank by default).  ``W`` is compared in its original column order.
    """
    base = config if config is not None else (Algo1Config() if int(algo) == 1 else Algo2Config())
    rows = []
    for K in K_list:
        cfg = replace(base, **{field: int(K)})
        res = run_solver(algo, W, R, cfg)
        S = res.shape_original_order()
        rows.append({"K": int(K), "datafit": _reproj(W, R, S),
                     "gtfit": float(np.linalg.norm(S_gt - S))})
    return rows


def ablation_run(W, R, S_gt, mode="both", config=None) -> float:
    """Algorithm 1 with the spatial and/or temporal self-expression switched off."""
    cfg = config or Algo1Config()
    if mode not in ("none", "spatial", "temporal", "both"):
        raise ValueError(f"unknown ablation mode {mode!r}")
    if mode in ("none", "temporal"):
        cfg = replace(cfg, lambda1=0.0, lambda3=0.0)
    if mode in ("none", "spatial"):
        cfg = replace(cfg, lambda2=0.0, lambda4=0.0)
    return _result_e3d(run_algorithm1(W, R, cfg), S_gt)


def singular_count_sweep(W, R, S_gt, p_list, algo=1, config=None):
    """Reconstruction error as the number of retained singular vectors changes."""
    base = config if config is not None else (Algo1Config() if int(algo) == 1 else Algo2Config())
    key = "p_spatial" if int(algo) == 1 else "p"
    rows = []
    for p in p_list:
        res = run_solver(algo, W, R, replace(base, **{key: int(p)}))
        rows.append({"p": int(p), "e3d": _result_e3d(res, S_gt)})
    return rows


def noise_sweep(scene: SyntheticScene, levels=NOISE_LEVELS, algos=(1, 2), configs=None,
                seed=0):
    """e3d of each algorithm on the scene with noise ``sigma = lambda_g max|W|``."""
    configs = configs or {}
    rows = []
    for i, lam in enumerate(levels):
        Wn = add_noise(scene.W, float(lam), seed=seed + i)
        row = {"lambda_g": float(lam)}
        for a in algos:
            res = run_solver(a, Wn, scene.R, configs.get(a))
            row[f"e3d_algo{a}"] = _result_e3d(res, scene.S_gt)
        rows.append(row)
    return rows


def table_to_csv(rows, path=None) -> str:
    if not rows:
        raise ValueError("empty table")
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0].keys()), lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow({k: (repr(float(v)) if isinstance(v, float) else v)
                         for k, v in r.items()})
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


def spearman(x, y) -> float:
    return float(spearmanr(x, y).statistic)


def sharp_rank(S, tol=1e-8) -> int:
    s = np.linalg.svd(reshuffle(S), compute_uv=False)
    return int(np.sum(s > tol * s[0])) if s[0] > 0 else 0


def load_sequence(directory, center=False):
    """Read ``W``, ``R`` and ``S_gt`` (``.csv`` or ``.bin``) from one directory."""
    import os

    from .io import load_matrix

    def find(stem):
        for ext in (".bin", ".csv"):
            path = os.path.join(directory, stem + ext)
            if os.path.exists(path):
                return load_matrix(path)
        raise FileNotFoundError(f"{directory}: no {stem}.csv or {stem}.bin")

    W, R, gt = find("W"), find("R"), find("S_gt")
    if center:
        W = W - W.mean(axis=1, keepdims=True)
        gt = gt - gt.mean(axis=1, keepdims=True)
    return W, RotationStack(R).blocks.copy(), gt


def weight_grid(spatial=(0.1, 1.0, 10.0), low_rank=(1e-3, 1e-2, 1e-1),
                nuclear=(1e-3, 1e-2, 1e-1)):
    """Tied-weight grid for Algorithm 1: ``lambda1 = lambda2``, ``lambda3 = lambda4``.

    The default has ``3 x 3 x 3 = 27`` points.
    """
    return [{"lambda1": a, "lambda2": a, "lambda3": b, "lambda4": b, "gamma": g}
            for a in spatial for b in low_rank for g in nuclear]


def grid_search(W, R, S_gt, grid=None, config=None):
    """Run Algorithm 1 at every grid point; rows sorted by grid order."""
    base = config or Algo1Config()
    rows = []
    for point in (grid if grid is not None else weight_grid()):
        res = run_algorithm1(W, R, replace(base, **point))
        rows.append({**point, "e3d": _result_e3d(res, S_gt)})
    return rows
