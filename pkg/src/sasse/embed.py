"""Column subset selection on the binary label matrix.

Given ``Y`` (N x L, entries in {0,1}) pick ``r`` columns ``C`` so that the
span of ``Y[:, C]`` reconstructs ``Y`` as well as possible in Frobenius
norm, then store ``Z = pinv(Y[:, C]) @ Y`` to lift reduced labels back.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import BruteforceTooLarge, ConfigError

BRUTEFORCE_LIMIT = 10**6
SAMPLED_RESTARTS = 16


@dataclass(frozen=True)
class EmbeddingModel:
    C: np.ndarray  # selected column indices, in selection order
    Z: np.ndarray  # r x L

    def __post_init__(self):
        C = np.asarray(self.C, dtype=np.int64)
        Z = np.asarray(self.Z, dtype=np.float64)
        if C.ndim != 1 or Z.ndim != 2 or Z.shape[0] != C.size:
            raise ValueError(f"inconsistent embedding shapes C={C.shape} Z={Z.shape}")
        if len(set(C.tolist())) != C.size or np.any(C < 0) or np.any(C >= Z.shape[1]):
            raise ValueError("column indices must be distinct and in range")
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "Z", Z)

    @property
    def r(self) -> int:
        return self.C.size

    @property
    def label_length(self) -> int:
        return self.Z.shape[1]


def _as_label_matrix(Y) -> np.ndarray:
    Y = np.asarray(Y)
    if Y.ndim != 2 or Y.shape[0] < 1:
        raise ValueError(f"label matrix must be N x L with N >= 1, got {Y.shape}")
    Yf = Y.astype(np.float64)
    if not np.all((Yf == 0) | (Yf == 1)):
        raise ValueError("label matrix entries must be 0 or 1")
    return Yf


def _check_columns(C, ncols) -> np.ndarray:
    C = np.asarray(C, dtype=np.int64).ravel()
    if C.size == 0:
        return C
    if np.any(C < 0) or np.any(C >= ncols) or len(set(C.tolist())) != C.size:
        raise ValueError(f"invalid column index set {C.tolist()} for {ncols} columns")
    return C


def _range_basis(A: np.ndarray):
    """Orthonormal basis of range(A) and the singular values kept.

    Rank cutoff is ``max(N, r) * eps * sigma_max``.
    """
    if A.shape[1] == 0:
        return np.zeros((A.shape[0], 0)), np.zeros(0), np.zeros((0, 0)), np.zeros(0, dtype=bool)
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    tol = max(A.shape) * np.finfo(np.float64).eps * (s[0] if s.size else 0.0)
    keep = s > tol
    return U[:, keep], s, Vt, keep


def css_residual(Y, C) -> float:
    """Frobenius norm of ``Y - Y_C pinv(Y_C) Y``."""
    Y = _as_label_matrix(Y)
    C = _check_columns(C, Y.shape[1])
    if C.size == 0:
        return float(np.linalg.norm(Y))
    U = _range_basis(Y[:, C])[0]
    R = Y - U @ (U.T @ Y)
    return float(np.linalg.norm(R))


def pseudo_inverse(A) -> np.ndarray:
    """SVD pseudo-inverse with the same rank cutoff as :func:`css_residual`."""
    A = np.asarray(A, dtype=np.float64)
    U, s, Vt, keep = _range_basis(A)
    return (Vt[keep].T / s[keep]) @ U.T


def fit_projection(Y, C) -> tuple[EmbeddingModel, np.ndarray]:
    """Return the embedding ``(C, Z)`` and the reduced labels ``Y[:, C]``."""
    Y = _as_label_matrix(Y)
    C = _check_columns(C, Y.shape[1])
    if C.size == 0:
        raise ValueError("at least one column must be selected")
    Yc = Y[:, C]
    Z = pseudo_inverse(Yc) @ Y
    return EmbeddingModel(C, Z), Yc


# -- selection strategies ------------------------------------------------------


def greedy_trajectory(Y, r: int) -> tuple[np.ndarray, np.ndarray]:
    """Forward selection; returns (columns, residual norm after each step).

    Works on the Gram matrix ``G = R^T R`` of the current residual ``R``.
    Picking column ``c`` removes ``||G[:, c]||^2 / G[c, c]`` from the squared
    residual, and the update ``G -= g g^T / G[c, c]`` is one step of
    Gram-Schmidt applied to all columns at once.
    """
    Y = _as_label_matrix(Y)
    L = Y.shape[1]
    G = Y.T @ Y
    dtol = 1e-10 * max(1.0, float(np.max(np.diag(G))))
    chosen: list[int] = []
    residuals = np.empty(r)
    available = np.ones(L, dtype=bool)
    for step in range(r):
        diag = np.diag(G).copy()
        live = available & (diag > dtol)
        if np.any(live):
            gain = np.full(L, -np.inf)
            gain[live] = np.sum(G[:, live] ** 2, axis=0) / diag[live]
            best = float(np.max(gain))
            # near-equal gains count as ties -> lowest index wins
            c = int(np.flatnonzero(gain >= best - 1e-12 * max(1.0, abs(best)))[0])
            g = G[:, c].copy()
            G -= np.outer(g, g) / g[c]
        else:
            c = int(np.flatnonzero(available)[0])
        available[c] = False
        chosen.append(c)
        residuals[step] = math.sqrt(max(0.0, float(np.trace(G))))
    return np.array(chosen, dtype=np.int64), residuals


def _greedy(Y, r):
    return greedy_trajectory(Y, r)[0]


def _sampled(Y, r, seed, restarts=SAMPLED_RESTARTS):
    rng = np.random.default_rng(seed)
    L = Y.shape[1]
    w = np.sum(Y**2, axis=0)
    # zero columns still need a nonzero weight so that any r can be drawn
    w = w + 1e-12 * max(1.0, float(w.sum()))
    p = w / w.sum()
    best, best_res = None, np.inf
    for _ in range(restarts):
        C = np.sort(rng.choice(L, size=r, replace=False, p=p))
        res = css_residual(Y, C)
        if res < best_res - 1e-12 * max(1.0, best_res if np.isfinite(best_res) else 1.0):
            best, best_res = C, res
    return best


def _bruteforce(Y, r):
    L = Y.shape[1]
    total = math.comb(L, r)
    if total > BRUTEFORCE_LIMIT:
        raise BruteforceTooLarge(f"C({L}, {r}) = {total} subsets exceeds {BRUTEFORCE_LIMIT}")
    best, best_res = None, np.inf
    for C in itertools.combinations(range(L), r):
        res = css_residual(Y, C)
        if res < best_res - 1e-12 * max(1.0, best_res if np.isfinite(best_res) else 1.0):
            best, best_res = C, res
    return np.array(best, dtype=np.int64)


def select_columns(Y, r: int, strategy: str = "greedy", seed: int = 0) -> np.ndarray:
    Y = _as_label_matrix(Y)
    L = Y.shape[1]
    if not 1 <= r <= L:
        raise ConfigError(f"r must lie in [1, {L}], got {r}")
    if strategy == "greedy":
        return _greedy(Y, r)
    if strategy == "sampled":
        return _sampled(Y, r, seed)
    if strategy == "bruteforce":
        return _bruteforce(Y, r)
    raise ConfigError(f"unknown column selection strategy {strategy!r}")


def component_coverage(C, b: int) -> list[int]:
    """Number of selected bits falling in each of the seven pose slots."""
    counts = np.bincount(np.asarray(C, dtype=np.int64) // b, minlength=7)
    return counts[:7].tolist()
