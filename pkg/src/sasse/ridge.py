"""Closed-form ridge regression from descriptors to reduced labels."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import DimensionMismatch, NonFiniteInput


@dataclass(frozen=True)
class RegressorModel:
    W: np.ndarray  # d x r
    lam: float

    def __post_init__(self):
        W = np.asarray(self.W, dtype=np.float64)
        if W.ndim != 2:
            raise ValueError("W must be a d x r matrix")
        if not np.all(np.isfinite(W)):
            raise NonFiniteInput("regression weights must be finite")
        object.__setattr__(self, "W", W)

    @property
    def d(self) -> int:
        return self.W.shape[0]

    @property
    def r(self) -> int:
        return self.W.shape[1]


def fit_ridge(X, Yc, lam: float, standardize: bool = False) -> RegressorModel:
    """Minimize ``||X W - Yc||_F^2 + lam ||W||_F^2`` over ``W``.

    Solves ``(X^T X + lam I) W = X^T Yc`` with a Cholesky factorization, or
    the equivalent N x N system when there are fewer items than features.
    With ``standardize`` the columns of ``X`` are scaled to unit RMS before
    the fit and the scaling is folded back into ``W``, so prediction and
    storage are unchanged (``W`` stays d x r).
    """
    X = np.asarray(X, dtype=np.float64)
    Yc = np.asarray(Yc, dtype=np.float64)
    if Yc.ndim == 1:
        Yc = Yc[:, None]
    if X.ndim != 2 or X.shape[0] < 1 or X.shape[0] != Yc.shape[0]:
        raise DimensionMismatch(f"X {X.shape} and Yc {Yc.shape} disagree on N")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Yc))):
        raise NonFiniteInput("X and Yc must be finite")
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    scale = None
    if standardize:
        scale = np.sqrt(np.mean(X**2, axis=0))
        scale[scale == 0] = 1.0
        X = X / scale
    n, d = X.shape
    if n < d:
        # dual form, same minimizer: W = X^T (X X^T + lam I)^-1 Yc
        K = X @ X.T
        K[np.diag_indices_from(K)] += lam
        W = X.T @ cho_solve(cho_factor(K, lower=True, check_finite=False), Yc, check_finite=False)
    else:
        A = X.T @ X
        A[np.diag_indices_from(A)] += lam
        W = cho_solve(cho_factor(A, lower=True, check_finite=False), X.T @ Yc, check_finite=False)
    if scale is not None:
        W = W / scale[:, None]
    return RegressorModel(W, float(lam))


def predict_reduced(model: RegressorModel, x) -> np.ndarray:
    """``W^T x`` for one descriptor, or ``X W`` for a batch (rows)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.d:
        raise DimensionMismatch(f"descriptor has dimension {x.shape[-1]}, model expects {model.d}")
    return x @ model.W


def ridge_objective(X, Yc, W, lam) -> float:
    R = X @ W - Yc
    return float(np.sum(R * R) + lam * np.sum(W * W))
