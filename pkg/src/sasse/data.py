"""Dataset files, the synthetic scene generator, evaluation and curve fitting."""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .cluster import _sq_dists, classify_batch
from .errors import DecodeFailure, DegenerateFit, DegenerateQuaternion, InvalidPose, ParseError
from .pgo import RelativePoseEdge, refine_trajectory
from .pipeline import ModelBundle, predict, predict_batch
from .types import Dataset, canonical_quaternion, rotation_error_deg

log = logging.getLogger(__name__)

POSE_COLUMNS = ("qa", "qb", "qc", "qd", "t1", "t2", "t3")

# synthetic scene layout
CIRCLE_RADIUS = 10.0
CAMERA_HEIGHT = 1.5
TRANSLATION_SPREAD = 0.025  # per-axis std of camera centers around a cluster center, m
ROTATION_SPREAD_DEG = 0.3  # per-axis std of the perturbation rotation vector, degrees
ONEHOT_MAGNITUDE = 5.0


# -- CSV ----------------------------------------------------------------------------


def save_dataset(dataset: Dataset, path) -> None:
    header = ["id", *POSE_COLUMNS] + [f"f{j}" for j in range(dataset.d)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i, id_ in enumerate(dataset.ids):
            w.writerow([id_] + [repr(float(v)) for v in dataset.P[i]] + [repr(float(v)) for v in dataset.X[i]])


def load_dataset(path) -> Dataset:
    """Read ``id,qa,qb,qc,qd,t1,t2,t3,f0..f{d-1}`` rows; poses are canonicalized."""
    ids, poses, feats = [], [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file", 1) from None
        header = [h.strip() for h in header]
        if tuple(header[:8]) != ("id", *POSE_COLUMNS) or len(header) < 9:
            raise ParseError("header must start with id,qa,qb,qc,qd,t1,t2,t3 followed by f0..", 1)
        d = len(header) - 8
        if header[8:] != [f"f{j}" for j in range(d)]:
            raise ParseError("descriptor columns must be named f0..f{d-1} in order", 1)
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 8 + d:
                raise ParseError(f"row {row[0]!r} has {len(row)} fields, expected {8 + d}", lineno)
            try:
                vals = np.array([float(c) for c in row[1:]])
            except ValueError as exc:
                raise ParseError(f"row {row[0]!r}: {exc}", lineno) from None
            if not np.all(np.isfinite(vals[7:])):
                raise ParseError(f"row {row[0]!r} has a non-finite descriptor entry", lineno)
            if not np.all(np.isfinite(vals[:7])):
                raise InvalidPose(f"pose of {row[0]!r} is not finite")
            q = vals[:4]
            try:
                qc = canonical_quaternion(q)
            except DegenerateQuaternion:
                raise InvalidPose(f"pose of {row[0]!r} has a zero quaternion") from None
            if abs(np.linalg.norm(q) - 1.0) > 1e-6:
                log.warning("line %d: quaternion of %r has norm %.9f, renormalized", lineno, row[0],
                            np.linalg.norm(q))
            ids.append(row[0])
            poses.append(np.concatenate([qc, vals[4:7]]))
            feats.append(vals[7:])
    if not ids:
        raise ParseError("no data rows", 2)
    if len(set(ids)) != len(ids):
        raise ParseError("duplicate ids")
    return Dataset(tuple(ids), np.array(feats), np.array(poses))


# -- synthetic scenes ----------------------------------------------------------------


def _quat_mul(a, b):
    aw, ax, ay, az = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    bw, bx, by, bz = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ], axis=-1)


def _rotvec_to_quat(v):
    angle = np.linalg.norm(v, axis=-1, keepdims=True)
    half = 0.5 * angle
    with np.errstate(invalid="ignore", divide="ignore"):
        axis = np.where(angle > 0, v / angle, 0.0)
    return np.concatenate([np.cos(half), np.sin(half) * axis], axis=-1)


@dataclass
class SyntheticScene:
    train: Dataset
    test: Dataset
    train_labels: np.ndarray
    test_labels: np.ndarray
    centers: np.ndarray
    maps: np.ndarray = field(repr=False)  # k x d x 7
    offsets: np.ndarray = field(repr=False)  # k x d


def generate_scene(k_true: int, N: int, d: int, noise_sigma: float, seed: int = 0,
                   translation_spread: float | None = None,
                   rotation_spread_deg: float | None = None) -> SyntheticScene:
    """Like :func:`generate_synthetic` but also returns the generator's labels.

    Descriptors are affine in the pose, so every bit a linear regressor can
    predict is a half-space in pose space; the within-cluster spreads bound
    the attainable accuracy and are kept small by default.
    """
    ts = TRANSLATION_SPREAD if translation_spread is None else translation_spread
    rs = ROTATION_SPREAD_DEG if rotation_spread_deg is None else rotation_spread_deg
    if k_true < 1:
        raise ValueError("k_true must be >= 1")
    if d < 8:
        raise ValueError("d must be >= 8")
    if N < 2:
        raise ValueError("N must be >= 2")
    rng = np.random.default_rng(seed)
    angles = 2 * np.pi * np.arange(k_true) / k_true + np.pi / 4
    centers = np.stack([CIRCLE_RADIUS * np.cos(angles), CIRCLE_RADIUS * np.sin(angles),
                        np.full(k_true, CAMERA_HEIGHT)], axis=1)
    # base orientations keep every component well away from zero
    mags = rng.uniform(0.3, 0.7, size=(k_true, 4))
    signs = rng.choice([-1.0, 1.0], size=(k_true, 4))
    base = np.array([canonical_quaternion(q) for q in mags * signs])

    labels = np.arange(N) % k_true
    rng.shuffle(labels)
    t = centers[labels] + rng.normal(0.0, ts, size=(N, 3))
    dq = _rotvec_to_quat(rng.normal(0.0, math.radians(rs), size=(N, 3)))
    q = _quat_mul(base[labels], dq)
    q = np.array([canonical_quaternion(v) for v in q])
    P = np.hstack([q, t])

    maps = rng.normal(0.0, 1.0 / math.sqrt(7), size=(k_true, d, 7))
    offsets = rng.normal(0.0, 1.0, size=(k_true, d))
    offsets[np.arange(k_true), np.arange(k_true) % d] += ONEHOT_MAGNITUDE
    X = np.einsum("nij,nj->ni", maps[labels], P) + offsets[labels]
    X += rng.normal(0.0, noise_sigma, size=X.shape) if noise_sigma > 0 else 0.0

    perm = rng.permutation(N)
    tr, te = np.sort(perm[: N // 2]), np.sort(perm[N // 2 :])
    ids = np.array([f"s{seed}_{i:06d}" for i in range(N)])
    train = Dataset(tuple(ids[tr]), X[tr], P[tr])
    test = Dataset(tuple(ids[te]), X[te], P[te])
    return SyntheticScene(train, test, labels[tr], labels[te], centers, maps, offsets)


def generate_synthetic(k_true: int, N: int, d: int, noise_sigma: float, seed: int = 0, **spreads):
    """Seeded synthetic (train, test) split of ``N`` items with ``k_true`` pose clusters.

    Cluster centers sit on a 10 m circle at camera height 1.5 m; descriptors
    are a cluster-specific affine image of the 7-vector pose plus a one-hot
    offset of magnitude 5 and Gaussian noise.
    """
    scene = generate_scene(k_true, N, d, noise_sigma, seed, **spreads)
    return scene.train, scene.test


# -- evaluation ----------------------------------------------------------------------


@dataclass
class EvalReport:
    n: int
    median_translation_error_m: float  # NaN when every decode failed
    median_rotation_error_deg: float
    decode_failure_rate: float
    per_cluster_routing_accuracy: list
    query_time_ms: dict = field(default_factory=dict)
    refined: bool = False
    notes: list = field(default_factory=list)

    @property
    def medians_defined(self) -> bool:
        return self.decode_failure_rate < 1.0

    def as_dict(self) -> dict:
        out = {
            "n": self.n,
            "median_translation_error_m": self.median_translation_error_m,
            "median_rotation_error_deg": self.median_rotation_error_deg,
            "medians_defined": self.medians_defined,
            "decode_failure_rate": self.decode_failure_rate,
            "refined": self.refined,
        }
        for j, acc in enumerate(self.per_cluster_routing_accuracy):
            out[f"routing_accuracy_{j}"] = acc
        for key, val in self.query_time_ms.items():
            out[f"query_time_ms_{key}"] = val
        return out

    def to_kv(self) -> str:
        return "".join(f"{k}={_fmt(v)}\n" for k, v in self.as_dict().items())

    def to_table(self) -> str:
        rows = [
            ("items", str(self.n)),
            ("median translation error", f"{self.median_translation_error_m:.4f} m"),
            ("median rotation error", f"{self.median_rotation_error_deg:.4f} deg"),
            ("decode failure rate", f"{100 * self.decode_failure_rate:.2f} %"),
            ("PGO refinement", "yes" if self.refined else "no"),
        ]
        if not self.medians_defined:
            rows.append(("note", "every decode failed; medians undefined"))
        rows += [(f"routing accuracy, cluster {j}", f"{100 * a:.2f} %")
                 for j, a in enumerate(self.per_cluster_routing_accuracy)]
        if self.query_time_ms:
            q = self.query_time_ms
            rows.append(("query time (median / q1 / q3)",
                         f"{q['median']:.3f} / {q['q1']:.3f} / {q['q3']:.3f} ms"))
        rows += [("note", n) for n in self.notes]
        w = max(len(r[0]) for r in rows)
        return "\n".join(f"{a:<{w}}  {b}" for a, b in rows)


def _fmt(v):
    if isinstance(v, float):
        return repr(float(v))
    return str(v).lower() if isinstance(v, bool) else str(v)


def timing_stats(samples_ms) -> dict:
    q1, med, q3 = np.percentile(np.asarray(samples_ms, dtype=np.float64), [25, 50, 75])
    return {"median": float(med), "q1": float(q1), "q3": float(q3),
            "min": float(np.min(samples_ms)), "max": float(np.max(samples_ms))}


def pose_errors(pred, truth):
    """Per-row translation (m) and rotation (deg) errors between N x 7 arrays."""
    pred = np.atleast_2d(pred)
    truth = np.atleast_2d(truth)
    et = np.linalg.norm(pred[:, 4:] - truth[:, 4:], axis=1)
    er = np.array([rotation_error_deg(a, b) for a, b in zip(pred[:, :4], truth[:, :4])])
    return et, er


def evaluate(bundle: ModelBundle, test: Dataset, edges=None, window_size: int = 5,
             timed: bool = True, cluster_labels=None) -> EvalReport:
    """Predict every test item and summarize errors.

    With ``timed`` each item goes through the single-query :func:`predict`
    and its wall time is recorded; otherwise a batched path is used.  When
    ``edges`` are given, test items are treated as one trajectory in file
    order and refined window by window; edges touching failed decodes are
    dropped.  ``cluster_labels`` (e.g. generator labels) select what the
    routing accuracy is measured against; by default it is the nearest
    training centroid.
    """
    n = test.n
    if test.d != bundle.d:
        raise ValueError(f"test descriptors have dimension {test.d}, model expects {bundle.d}")
    poses = np.full((n, 7), np.nan)
    failed = np.zeros(n, dtype=bool)
    times = []
    if timed:
        for i in range(n):
            t0 = time.perf_counter()
            try:
                p = predict(bundle, test.X[i])
            except DecodeFailure:
                failed[i] = True
            else:
                poses[i] = p.as_array()
            times.append(1e3 * (time.perf_counter() - t0))
    else:
        bp = predict_batch(bundle, test.X)
        poses, failed = bp.poses, bp.failed

    refined = False
    if edges is not None:
        ok = np.flatnonzero(~failed)
        remap = {int(g): l for l, g in enumerate(ok)}
        local = [RelativePoseEdge(remap[e.i], remap[e.j], e.t, e.q) for e in edges
                 if e.i in remap and e.j in remap]
        if ok.size >= 2:
            T = min(window_size, ok.size)
            poses[ok] = refine_trajectory(poses[ok], local, T)
            refined = True

    truth = test.canonicalized().P
    ok = ~failed
    if np.any(ok):
        et, er = pose_errors(poses[ok], truth[ok])
        med_t, med_r = float(np.median(et)), float(np.median(er))
    else:
        med_t = med_r = float("nan")

    if cluster_labels is None and bundle.centroids is not None:
        cluster_labels = np.argmin(_sq_dists(test.X, bundle.centroids), axis=1)
    routing = []
    if cluster_labels is not None:
        routes = classify_batch(bundle.classifier, test.X)
        cluster_labels = np.asarray(cluster_labels)
        for j in range(bundle.k):
            m = cluster_labels == j
            routing.append(float(np.mean(routes[m] == j)) if np.any(m) else float("nan"))

    return EvalReport(n, med_t, med_r, float(np.mean(failed)), routing,
                      timing_stats(times) if times else {}, refined)


# -- storage scaling fit -----------------------------------------------------------------

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class ScalingFit:
    a: float
    b_off: float
    mse: float
    points: tuple

    def predict(self, N):
        return np.asarray(N, dtype=np.float64) ** self.a + self.b_off


def _fit_offset(N, S, a):
    b = float(np.mean(S - N**a))
    return b, float(np.mean((N**a + b - S) ** 2))


def fit_scaling_curve(points, lo: float = 1e-9, hi: float = 2.0, tol: float = 1e-12) -> ScalingFit:
    """Least-squares fit of ``S = N**a + b`` over ``a`` in ``(0, 2]``.

    The offset has a closed form for each ``a``; ``a`` itself is found by
    golden-section search on the mean squared error.
    """
    pts = [(float(n), float(s)) for n, s in points]
    if len(pts) < 3:
        raise DegenerateFit(f"need at least 3 points, got {len(pts)}")
    N = np.array([p[0] for p in pts])
    S = np.array([p[1] for p in pts])
    if np.any(N <= 1) or not np.all(np.isfinite(N)) or not np.all(np.isfinite(S)):
        raise DegenerateFit("points need finite S and N > 1")
    if np.all(N == N[0]):
        raise DegenerateFit("all points share the same N")

    def mse(a):
        return _fit_offset(N, S, a)[1]

    x1 = hi - _GOLDEN * (hi - lo)
    x2 = lo + _GOLDEN * (hi - lo)
    f1, f2 = mse(x1), mse(x2)
    while hi - lo > tol:
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - _GOLDEN * (hi - lo)
            f1 = mse(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + _GOLDEN * (hi - lo)
            f2 = mse(x2)
    a = 0.5 * (lo + hi)
    b, err = _fit_offset(N, S, a)
    return ScalingFit(a, b, err, tuple(pts))
