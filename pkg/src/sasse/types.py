"""Domain types shared by every stage: poses, datasets and training config."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, DegenerateQuaternion, DimensionMismatch, InvalidPose

PRECISIONS = (16, 32, 64)
CSS_STRATEGIES = ("greedy", "sampled", "bruteforce")

_MIN_QUAT_NORM = 1e-9


def canonical_quaternion(q) -> np.ndarray:
    """Unit-normalize ``q`` and flip it so the first nonzero component is >= 0."""
    q = np.asarray(q, dtype=np.float64)
    n = float(np.linalg.norm(q))
    if not np.isfinite(n) or n <= _MIN_QUAT_NORM:
        raise DegenerateQuaternion(f"quaternion norm {n:g} is too small")
    if abs(n - 1.0) > 4 * np.finfo(np.float64).eps:  # leaves unit inputs bit-identical
        q = q / n
    nz = np.flatnonzero(q)
    if nz.size and q[nz[0]] < 0:
        q = -q
    return q + 0.0  # drop negative zeros


@dataclass(frozen=True)
class PoseVector:
    """Unit quaternion (qa, qb, qc, qd) plus camera center in meters.

    Construction does not normalize; use :func:`canonicalize_pose` or
    :meth:`from_array` with ``canonical=True`` for that.
    """

    q: tuple
    t: tuple

    def __post_init__(self):
        q = tuple(float(v) for v in self.q)
        t = tuple(float(v) for v in self.t)
        if len(q) != 4 or len(t) != 3:
            raise InvalidPose("pose needs 4 quaternion and 3 translation components")
        if not all(math.isfinite(v) for v in q + t):
            raise InvalidPose("pose components must be finite")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "t", t)

    @classmethod
    def from_array(cls, p, canonical: bool = False) -> "PoseVector":
        p = np.asarray(p, dtype=np.float64).ravel()
        if p.size != 7:
            raise InvalidPose(f"expected 7 components, got {p.size}")
        pose = cls(tuple(p[:4]), tuple(p[4:]))
        return canonicalize_pose(pose) if canonical else pose

    def as_array(self) -> np.ndarray:
        return np.array(self.q + self.t, dtype=np.float64)


def canonicalize_pose(p: PoseVector) -> PoseVector:
    return PoseVector(tuple(canonical_quaternion(p.q)), p.t)


def rotation_error_deg(q1, q2) -> float:
    """Angle in degrees of the relative rotation between two quaternions.

    Inputs are normalized first.  The half-angle comes from ``atan2`` of the
    chord lengths, which stays accurate for nearly equal rotations where
    ``acos`` of the dot product loses precision.
    """
    a = np.asarray(q1, dtype=np.float64)
    b = np.asarray(q2, dtype=np.float64)
    a = a / np.linalg.norm(a)
    b = b / np.linalg.norm(b)
    if np.dot(a, b) < 0:
        b = -b
    return math.degrees(4.0 * math.atan2(np.linalg.norm(a - b), np.linalg.norm(a + b)))


def translation_error(t1, t2) -> float:
    return float(np.linalg.norm(np.asarray(t1, dtype=np.float64) - np.asarray(t2, dtype=np.float64)))


@dataclass(frozen=True)
class Dataset:
    """Ordered (id, descriptor, pose) items with one descriptor dimension.

    Descriptors are held as an ``N x d`` array and poses as ``N x 7``
    (quaternion first), which is the layout every stage consumes.
    """

    ids: tuple
    X: np.ndarray
    P: np.ndarray

    def __post_init__(self):
        X = np.ascontiguousarray(self.X, dtype=np.float64)
        P = np.ascontiguousarray(self.P, dtype=np.float64)
        ids = tuple(str(i) for i in self.ids)
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise DimensionMismatch(f"descriptor matrix must be N x d with N, d >= 1, got {X.shape}")
        if P.shape != (X.shape[0], 7):
            raise DimensionMismatch(f"pose matrix shape {P.shape} does not match N={X.shape[0]}")
        if len(ids) != X.shape[0]:
            raise DimensionMismatch("one id per item required")
        if len(set(ids)) != len(ids):
            raise ConfigError("dataset ids must be unique")
        if not np.all(np.isfinite(X)):
            raise DimensionMismatch("descriptors must be finite")
        if not np.all(np.isfinite(P)):
            raise InvalidPose("poses must be finite")
        X.setflags(write=False)
        P.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "ids", ids)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def __len__(self):
        return self.n

    def pose(self, i: int) -> PoseVector:
        return PoseVector.from_array(self.P[i])

    def subset(self, idx: Sequence[int]) -> "Dataset":
        idx = np.asarray(idx, dtype=np.intp)
        return Dataset(tuple(self.ids[i] for i in idx), self.X[idx], self.P[idx])

    def canonicalized(self) -> "Dataset":
        P = np.array([canonicalize_pose(self.pose(i)).as_array() for i in range(self.n)])
        return Dataset(self.ids, self.X, P.reshape(-1, 7))


@dataclass(frozen=True)
class TrainConfig:
    r: int = 50
    k: int = 1
    b: int = 16
    lam: float = 0.1
    threshold: float = 0.5
    seed: int = 0
    css_strategy: str = "greedy"
    standardize: bool = False

    def __post_init__(self):
        if self.b not in PRECISIONS:
            raise ConfigError(f"b must be one of {PRECISIONS}, got {self.b}")
        if not 1 <= self.r <= 7 * self.b:
            raise ConfigError(f"r must lie in [1, {7 * self.b}] for b={self.b}, got {self.r}")
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise ConfigError(f"lambda must be a positive finite number, got {self.lam}")
        if not math.isfinite(self.threshold):
            raise ConfigError("threshold must be finite")
        if self.css_strategy not in CSS_STRATEGIES:
            raise ConfigError(f"css strategy must be one of {CSS_STRATEGIES}")

    @property
    def label_length(self) -> int:
        return 7 * self.b
