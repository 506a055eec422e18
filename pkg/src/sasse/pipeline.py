"""Training, inference and storage accounting for the full model."""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import codec
from .cluster import (
    Partition,
    RoutingClassifier,
    classify,
    classify_batch,
    fit_classifier,
    partition_data,
)
from .embed import EmbeddingModel, fit_projection, select_columns
from .errors import ClusterTooSmall, DecodeFailure, DimensionMismatch
from .ridge import RegressorModel, fit_ridge, predict_reduced
from .types import Dataset, PoseVector, TrainConfig

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
BYTES_PER_REAL = 8


def storage_bytes(d: int, r: int, b: int, k: int = 1) -> int:
    """Bytes of stored parameters: ``8 (k r (d + 7b) + (k - 1)(d + 1))``."""
    for name, v in (("d", d), ("r", r), ("b", b), ("k", k)):
        if int(v) != v or v < 1:
            raise ValueError(f"{name} must be a positive integer, got {v!r}")
    return BYTES_PER_REAL * (k * r * (d + 7 * b) + (k - 1) * (d + 1))


def thread_cap() -> int:
    """Parallelism limit from ``SASSE_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("SASSE_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class ClusterModel:
    embedding: EmbeddingModel
    regressor: RegressorModel


@dataclass(frozen=True)
class ModelBundle:
    config: TrainConfig
    d: int
    classifier: RoutingClassifier
    clusters: tuple
    centroids: np.ndarray | None = field(default=None, compare=False)
    format_version: int = FORMAT_VERSION

    def __post_init__(self):
        cfg = self.config
        if len(self.clusters) != cfg.k or self.classifier.k != cfg.k:
            raise ValueError("cluster count disagrees between config, classifier and models")
        if cfg.k > 1 and self.classifier.d != self.d:
            raise ValueError("classifier dimension disagrees with d")
        for cm in self.clusters:
            if cm.embedding.Z.shape != (cfg.r, 7 * cfg.b):
                raise ValueError(f"Z has shape {cm.embedding.Z.shape}, expected {(cfg.r, 7 * cfg.b)}")
            if cm.regressor.W.shape != (self.d, cfg.r):
                raise ValueError(f"W has shape {cm.regressor.W.shape}, expected {(self.d, cfg.r)}")

    @property
    def k(self) -> int:
        return self.config.k

    def storage_bytes(self) -> int:
        return storage_bytes(self.d, self.config.r, self.config.b, self.config.k)

    def parameter_count(self) -> int:
        n = self.classifier.hyperplanes.size
        for cm in self.clusters:
            n += cm.embedding.Z.size + cm.regressor.W.size
        return n


def _fit_cluster(X, P, cfg: TrainConfig) -> ClusterModel:
    Y = codec.encode_poses(P, cfg.b)
    C = select_columns(Y, cfg.r, cfg.css_strategy, cfg.seed)
    emb, Yc = fit_projection(Y, C)
    reg = fit_ridge(X, Yc, cfg.lam, standardize=cfg.standardize)
    return ClusterModel(emb, reg)


def train(dataset: Dataset, cfg: TrainConfig, partition: Partition | None = None) -> ModelBundle:
    """Fit k per-cluster (embedding, regressor) pairs and the router.

    Poses are sign-canonicalized before encoding.  ``partition`` overrides
    the k-means step (used by tests and oracles).
    """
    data = dataset.canonicalized()
    if partition is None:
        partition = partition_data(data, cfg.k, cfg.seed)
    elif partition.k != cfg.k:
        raise ValueError("partition cluster count disagrees with config")
    sizes = partition.sizes()
    for j, s in enumerate(sizes):
        if s < 2:
            raise ClusterTooSmall(j, int(s))

    def job(j):
        idx = partition.members(j)
        return _fit_cluster(data.X[idx], data.P[idx], cfg)

    workers = min(thread_cap(), cfg.k)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            clusters = tuple(pool.map(job, range(cfg.k)))
    else:
        clusters = tuple(job(j) for j in range(cfg.k))
    clf = fit_classifier(data, partition)
    log.info("trained %d cluster(s), sizes %s", cfg.k, sizes.tolist())
    return ModelBundle(cfg, data.d, clf, clusters, partition.centroids)


def threshold_bits(values, tau: float) -> np.ndarray:
    """Bit is 1 iff the lifted label value exceeds ``tau``."""
    return (np.asarray(values) > tau).astype(np.uint8)


def lifted_labels(bundle: ModelBundle, x, cluster: int) -> np.ndarray:
    cm = bundle.clusters[cluster]
    return predict_reduced(cm.regressor, x) @ cm.embedding.Z


def predict_bits(bundle: ModelBundle, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != bundle.d:
        raise DimensionMismatch(f"expected a descriptor of dimension {bundle.d}, got shape {x.shape}")
    j = classify(bundle.classifier, x)
    return threshold_bits(lifted_labels(bundle, x, j), bundle.config.threshold)


def predict(bundle: ModelBundle, x) -> PoseVector:
    """Pose for one descriptor; raises :class:`DecodeFailure` on bad bits."""
    return codec.decode_pose(predict_bits(bundle, x), bundle.config.b)


@dataclass
class BatchPrediction:
    poses: np.ndarray  # N x 7, NaN rows where decoding failed
    failed: np.ndarray  # bool mask
    routes: np.ndarray  # cluster index per item
    failures: list  # (row, DecodeFailure)


def predict_batch(bundle: ModelBundle, X) -> BatchPrediction:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != bundle.d:
        raise DimensionMismatch(f"expected descriptors of dimension {bundle.d}, got {X.shape[1]}")
    n = X.shape[0]
    routes = classify_batch(bundle.classifier, X)
    L = 7 * bundle.config.b
    lifted = np.empty((n, L))
    for j in range(bundle.k):
        rows = np.flatnonzero(routes == j)
        if rows.size:
            lifted[rows] = lifted_labels(bundle, X[rows], j)
    bits = threshold_bits(lifted, bundle.config.threshold)
    poses = np.full((n, 7), np.nan)
    failed = np.zeros(n, dtype=bool)
    failures = []
    for i in range(n):
        try:
            poses[i] = codec.decode_pose(bits[i], bundle.config.b).as_array()
        except DecodeFailure as exc:
            failed[i] = True
            failures.append((i, exc))
    return BatchPrediction(poses, failed, routes, failures)
