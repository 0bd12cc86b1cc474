"""scikit-learn style wrappers around the two solvers.

Reconstruction is transductive: ``fit(W, R)`` solves for the shape of the
tracks in ``W``, so ``transform`` only returns that shape for the same ``W``.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils import check_array
from sklearn.utils.validation import check_is_fitted

from .algo1 import Algo1Config, run_algorithm1
from .algo2 import Algo2Config, run_algorithm2
from .data_model import MalformedInputError, RotationStack

__all__ = ["GrassmannNRSfM", "GeometryAwareNRSfM", "check_measurements", "check_rotations"]


def check_measurements(W) -> np.ndarray:
    """Validate a ``2F x P`` measurement matrix."""
    W = check_array(W, dtype=np.float64, ensure_all_finite=True)
    if W.shape[0] % 2:
        raise MalformedInputError(f"W has {W.shape[0]} rows; rows must be even (2F)")
    return W


def check_rotations(R, n_frames) -> np.ndarray:
    """Validate camera rows as an ``(F, 2, 3)`` stack matching ``n_frames``."""
    R = np.asarray(R, dtype=np.float64)
    if R.ndim == 2:
        R = check_array(R, dtype=np.float64)
    blocks = RotationStack(R).blocks
    if blocks.shape[0] != n_frames:
        raise MalformedInputError(
            f"R has {blocks.shape[0]} frames but W has {n_frames}; expected shape ({2 * n_frames}, 3)")
    return np.array(blocks)


class _NRSfMBase(BaseEstimator, TransformerMixin):

    def _solve(self, W, R):
        raise NotImplementedError

    def fit(self, W, R):
        """Reconstruct the shape behind ``W`` given per-frame camera rows ``R``.

        Parameters
        ----------
        W : array-like, shape (2F, P)
        R : array-like, shape (2F, 3) or (F, 2, 3)

        Returns
        -------
        self
        """
        W = check_measurements(W)
        R = check_rotations(R, W.shape[0] // 2)
        res = self._solve(W, R)
        self.result_ = res
        self.shape_ = res.shape_original_order()
        self.labels_ = res.labels_original_order()
        self.P_history_ = [np.asarray(p) for p in res.P_history]
        self.n_iter_ = res.n_iter
        self.stop_reason_ = res.stop_reason
        self.diagnostics_ = list(res.diagnostics)
        self.n_frames_, self.n_points_ = W.shape[0] // 2, W.shape[1]
        self._fit_W = W
        return self

    def transform(self, W):
        """Shape (``3F x P``, original point order) for the fitted tracks."""
        check_is_fitted(self, "shape_")
        W = check_measurements(W)
        if W.shape != self._fit_W.shape or not np.array_equal(W, self._fit_W):
            raise ValueError("reconstruction is transductive; call fit on these tracks first")
        return self.shape_.copy()

    def fit_transform(self, W, R=None, **fit_params):
        if R is None:
            raise TypeError("camera rows R are required")
        return self.fit(W, R).shape_.copy()

    def predict(self, W):
        """Spatial cluster label of every point of the fitted tracks."""
        self.transform(W)
        return self.labels_.copy()


class GrassmannNRSfM(_NRSfMBase):
    """Joint spatial-temporal Grassmannian reconstruction (Algorithm 1).

    Parameters mirror :class:`~grassnrsfm.algo1.Algo1Config`.
    """

    def __init__(self, n_spatial=1, n_temporal=1, p_spatial=3, p_temporal=3,
                 lambda1=1.0, lambda2=1.0, lambda3=1e-2, lambda4=1e-2, gamma=1e-2,
                 rho=1.1, beta0=1e-3, beta_max=1e6, eps=1e-12, max_iter=300, seed=0):
        self.n_spatial = n_spatial
        self.n_temporal = n_temporal
        self.p_spatial = p_spatial
        self.p_temporal = p_temporal
        self.lambda1 = lambda1
        self.lambda2 = lambda2
        self.lambda3 = lambda3
        self.lambda4 = lambda4
        self.gamma = gamma
        self.rho = rho
        self.beta0 = beta0
        self.beta_max = beta_max
        self.eps = eps
        self.max_iter = max_iter
        self.seed = seed

    def config(self) -> Algo1Config:
        return Algo1Config(**self.get_params())

    def _solve(self, W, R):
        return run_algorithm1(W, R, self.config())


class GeometryAwareNRSfM(_NRSfMBase):
    """Reconstruction with grouping on a learned low-dimensional Grassmannian (Algorithm 2).

    Parameters mirror :class:`~grassnrsfm.algo2.Algo2Config`.
    """

    def __init__(self, n_clusters=1, p=3, beta1=1.0, beta2=1e-2, beta3=1e-2, beta0=1e-2,
                 beta_max=1e8, eps=1e-10, c=1.1, tau=0.97, dtilde=None, max_iter=300,
                 seed=0):
        self.n_clusters = n_clusters
        self.p = p
        self.beta1 = beta1
        self.beta2 = beta2
        self.beta3 = beta3
        self.beta0 = beta0
        self.beta_max = beta_max
        self.eps = eps
        self.c = c
        self.tau = tau
        self.dtilde = dtilde
        self.max_iter = max_iter
        self.seed = seed

    def config(self) -> Algo2Config:
        return Algo2Config(**self.get_params())

    def _solve(self, W, R):
        res = run_algorithm2(W, R, self.config())
        self.dtilde_ = res.dtilde
        return res
