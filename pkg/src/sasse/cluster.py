"""Data partitioning (k-means on descriptors) and the routing classifier.

The router is a linear model with a reference class: class ``k-1`` always
scores 0 and classes ``0..k-2`` score ``w_j . x + b_j``.  That stores exactly
``k-1`` hyperplanes of ``d+1`` numbers each.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp

from .errors import DimensionMismatch, KTooLarge

log = logging.getLogger(__name__)

KMEANS_MAX_ITER = 100
KMEANS_TOL = 1e-6
KMEANS_RESTARTS = 10


@dataclass(frozen=True)
class Partition:
    assignments: np.ndarray  # (N,) cluster index per item
    centroids: np.ndarray  # (k, d)

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    def members(self, j: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == j)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignments, minlength=self.k)


def _sq_dists(X, C):
    d2 = np.sum(X**2, axis=1)[:, None] - 2.0 * X @ C.T + np.sum(C**2, axis=1)[None, :]
    return np.maximum(d2, 0.0)


def _kmeans_pp(X, k, rng):
    n = X.shape[0]
    centers = [int(rng.integers(n))]
    closest = _sq_dists(X, X[centers])[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total <= 0:
            # all remaining points coincide with a center; take unused ones in order
            unused = np.setdiff1d(np.arange(n), centers)
            centers.append(int(unused[0]))
        else:
            centers.append(int(rng.choice(n, p=closest / total)))
        closest = np.minimum(closest, _sq_dists(X, X[centers[-1:]])[:, 0])
    return X[centers].copy()


def _repair_empty(X, labels, centroids):
    """Reseed each empty cluster with the point of the largest cluster that is
    farthest from that cluster's centroid."""
    k = centroids.shape[0]
    for _ in range(k):
        sizes = np.bincount(labels, minlength=k)
        empty = np.flatnonzero(sizes == 0)
        if empty.size == 0:
            break
        j = int(empty[0])
        big = int(np.argmax(sizes))
        members = np.flatnonzero(labels == big)
        far = members[int(np.argmax(np.sum((X[members] - centroids[big]) ** 2, axis=1)))]
        labels[far] = j
        centroids[j] = X[far]
        centroids[big] = X[labels == big].mean(axis=0)
    return labels, centroids


def _lloyd(X, k, rng):
    centroids = _kmeans_pp(X, k, rng)
    labels = np.argmin(_sq_dists(X, centroids), axis=1)
    for it in range(KMEANS_MAX_ITER):
        labels, centroids = _repair_empty(X, labels, centroids)
        new = np.vstack([X[labels == j].mean(axis=0) for j in range(k)])
        shift = float(np.max(np.linalg.norm(new - centroids, axis=1)))
        centroids = new
        labels = np.argmin(_sq_dists(X, centroids), axis=1)
        if shift <= KMEANS_TOL:
            break
    labels, centroids = _repair_empty(X, labels, centroids)
    inertia = float(np.sum((X - centroids[labels]) ** 2))
    log.debug("k-means stopped after %d iterations, inertia %.6g", it + 1, inertia)
    return labels, centroids, inertia


def partition_data(data, k: int, seed: int = 0, n_init: int = KMEANS_RESTARTS) -> Partition:
    """Seeded k-means (k-means++ init) on descriptors.

    ``data`` is a :class:`~sasse.types.Dataset` or an ``N x d`` array.  The
    lowest-inertia result of ``n_init`` restarts is kept.
    """
    X = np.asarray(getattr(data, "X", data), dtype=np.float64)
    n = X.shape[0]
    if k > n:
        raise KTooLarge(f"cannot form {k} clusters from {n} items")
    if k < 1:
        raise ValueError("k must be >= 1")
    if k == 1:
        return Partition(np.zeros(n, dtype=np.int64), X.mean(axis=0, keepdims=True))
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(max(1, n_init)):
        run = _lloyd(X, k, rng)
        if best is None or run[2] < best[2]:
            best = run
    return Partition(best[0].astype(np.int64), best[1])


@dataclass(frozen=True)
class RoutingClassifier:
    hyperplanes: np.ndarray  # (k-1) x (d+1): weights then bias
    k: int

    def __post_init__(self):
        H = np.asarray(self.hyperplanes, dtype=np.float64)
        if H.ndim != 2 or H.shape[0] != self.k - 1:
            raise ValueError(f"expected {self.k - 1} hyperplanes, got array of shape {H.shape}")
        if not np.all(np.isfinite(H)):
            raise ValueError("hyperplanes must be finite")
        object.__setattr__(self, "hyperplanes", H)

    @property
    def d(self) -> int:
        return self.hyperplanes.shape[1] - 1

    def scores(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        single = X.ndim == 1
        X2 = np.atleast_2d(X)
        H = self.hyperplanes
        if self.k > 1 and X2.shape[1] != self.d:
            raise DimensionMismatch(f"descriptor has dimension {X2.shape[1]}, router expects {self.d}")
        S = np.zeros((X2.shape[0], self.k))
        if self.k > 1:
            S[:, :-1] = X2 @ H[:, :-1].T + H[:, -1]
        return S[0] if single else S


def empty_classifier(d: int) -> RoutingClassifier:
    return RoutingClassifier(np.zeros((0, d + 1)), 1)


def classify(clf: RoutingClassifier, x) -> int:
    """Cluster index for one descriptor; ties go to the lowest index."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionMismatch("classify takes a single descriptor")
    if clf.k == 1:
        return 0
    return int(np.argmax(clf.scores(x)))


def classify_batch(clf: RoutingClassifier, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if clf.k == 1:
        return np.zeros(X.shape[0], dtype=np.int64)
    return np.argmax(clf.scores(X), axis=1).astype(np.int64)


def fit_classifier(data, partition: Partition, reg: float = 1e-4, tol: float = 1e-6) -> RoutingClassifier:
    """Multinomial logistic regression with the last class pinned to score 0.

    Features are centered and scaled internally for conditioning; the affine
    map is folded back so the stored hyperplanes act on raw descriptors.
    ``reg`` is the L2 weight on the (scaled) weights, per item.
    """
    X = np.asarray(getattr(data, "X", data), dtype=np.float64)
    labels = partition.assignments
    k = partition.k
    n, d = X.shape
    if k == 1:
        return empty_classifier(d)
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd[sd == 0] = 1.0
    Xs = np.hstack([(X - mu) / sd, np.ones((n, 1))])
    onehot = np.zeros((n, k))
    onehot[np.arange(n), labels] = 1.0
    m = k - 1

    def loss(theta):
        V = theta.reshape(m, d + 1)
        S = np.zeros((n, k))
        S[:, :m] = Xs @ V.T
        lse = logsumexp(S, axis=1)
        f = float(np.sum(lse - S[np.arange(n), labels])) / n
        f += 0.5 * reg * float(np.sum(V[:, :d] ** 2))
        P = np.exp(S - lse[:, None])
        G = ((P - onehot)[:, :m].T @ Xs) / n
        G[:, :d] += reg * V[:, :d]
        return f, G.ravel()

    res = minimize(loss, np.zeros(m * (d + 1)), jac=True, method="L-BFGS-B",
                   options={"maxiter": 5000, "gtol": tol, "ftol": 1e-15})
    V = res.x.reshape(m, d + 1)
    Wt = V[:, :d] / sd
    bias = V[:, d] - Wt @ mu
    return RoutingClassifier(np.hstack([Wt, bias[:, None]]), k)


def routing_accuracy(clf: RoutingClassifier, X, labels, k: int) -> list[float]:
    """Fraction of items of each cluster routed back to it (NaN for empty)."""
    pred = classify_batch(clf, X)
    labels = np.asarray(labels)
    out = []
    for j in range(k):
        mask = labels == j
        out.append(float(np.mean(pred[mask] == j)) if np.any(mask) else float("nan"))
    return out
