"""Windowed translation-only pose graph refinement.

Rotations are held at their predicted values, which turns each window into
the linear least-squares problem

    min_t  sum_(i,j) ||t_j - t_i - R_i t_ij||^2 + sum_i ||t_i - t_hat_i||^2

whose normal matrix is ``(I + Laplacian)`` applied to each coordinate axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import InvalidEdge
from .types import canonical_quaternion


def quat_to_matrix(q) -> np.ndarray:
    a, b, c, d = canonical_quaternion(q)
    return np.array([
        [a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)],
        [2 * (b * c + a * d), a * a - b * b + c * c - d * d, 2 * (c * d - a * b)],
        [2 * (b * d - a * c), 2 * (c * d + a * b), a * a - b * b - c * c + d * d],
    ])


@dataclass(frozen=True)
class RelativePoseEdge:
    """Pose of frame ``j`` expressed in frame ``i``: ``t_ij = R_i^T (t_j - t_i)``."""

    i: int
    j: int
    t: tuple
    q: tuple = (1.0, 0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.i == self.j:
            raise InvalidEdge(f"edge ({self.i}, {self.j}) joins a frame to itself")
        t = tuple(float(v) for v in self.t)
        q = tuple(float(v) for v in self.q)
        if len(t) != 3 or len(q) != 4 or not np.all(np.isfinite(t + q)):
            raise InvalidEdge(f"edge ({self.i}, {self.j}) needs a finite 3-vector and quaternion")
        if abs(np.linalg.norm(q) - 1.0) > 1e-6:
            raise InvalidEdge(f"edge ({self.i}, {self.j}) rotation is not a unit quaternion")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "q", q)


@dataclass(frozen=True)
class Window:
    """T consecutive predicted frames plus the edges among them (local indices)."""

    t_hat: np.ndarray  # T x 3
    rotations: np.ndarray  # T x 3 x 3, held fixed
    edges: tuple = ()

    def __post_init__(self):
        t_hat = np.asarray(self.t_hat, dtype=np.float64)
        rot = np.asarray(self.rotations, dtype=np.float64)
        if t_hat.ndim != 2 or t_hat.shape[1] != 3 or t_hat.shape[0] < 1:
            raise ValueError(f"t_hat must be T x 3, got {t_hat.shape}")
        T = t_hat.shape[0]
        if rot.shape != (T, 3, 3):
            raise ValueError(f"rotations must be {T} x 3 x 3, got {rot.shape}")
        for e in self.edges:
            if not (0 <= e.i < T and 0 <= e.j < T):
                raise InvalidEdge(f"edge ({e.i}, {e.j}) leaves the window of {T} frames")
        object.__setattr__(self, "t_hat", t_hat)
        object.__setattr__(self, "rotations", rot)
        object.__setattr__(self, "edges", tuple(self.edges))

    @classmethod
    def from_poses(cls, poses, edges=()):
        poses = np.asarray(poses, dtype=np.float64)
        return cls(poses[:, 4:], np.array([quat_to_matrix(q) for q in poses[:, :4]]), tuple(edges))

    @property
    def size(self) -> int:
        return self.t_hat.shape[0]

    def objective(self, t) -> float:
        t = np.asarray(t, dtype=np.float64)
        f = float(np.sum((t - self.t_hat) ** 2))
        for e in self.edges:
            r = t[e.j] - t[e.i] - self.rotations[e.i] @ np.asarray(e.t)
            f += float(r @ r)
        return f


def refine_window(w: Window) -> np.ndarray:
    """Refined translations (T x 3) minimizing ``w.objective``.

    Each axis shares the normal matrix ``I + L`` (L the edge-graph
    Laplacian), which is positive definite thanks to the prior terms.
    """
    if not w.edges:
        return w.t_hat.copy()
    M = np.eye(w.size)
    rhs = w.t_hat.copy()
    for e in w.edges:
        c = w.rotations[e.i] @ np.asarray(e.t)
        M[e.i, e.i] += 1.0
        M[e.j, e.j] += 1.0
        M[e.i, e.j] -= 1.0
        M[e.j, e.i] -= 1.0
        rhs[e.j] += c
        rhs[e.i] -= c
    return cho_solve(cho_factor(M, lower=True), rhs)


def window_bounds(n: int, T: int) -> list[tuple[int, int]]:
    """Consecutive non-overlapping ``[start, stop)`` windows of size ``T``.

    A trailing single frame is merged into the previous window.
    """
    if n < 1:
        return []
    if not 2 <= T:
        raise ValueError(f"window size must be >= 2, got {T}")
    bounds = [(s, min(s + T, n)) for s in range(0, n, T)]
    if len(bounds) > 1 and bounds[-1][1] - bounds[-1][0] < 2:
        last = bounds.pop()
        bounds[-1] = (bounds[-1][0], last[1])
    return bounds


def refine_trajectory(poses, edges, T: int) -> np.ndarray:
    """Refine an ``n x 7`` pose array window by window; rotations untouched.

    Edges whose endpoints fall in different windows are ignored.
    """
    poses = np.asarray(poses, dtype=np.float64)
    n = poses.shape[0]
    if not 2 <= T <= max(2, n):
        raise ValueError(f"window size {T} outside [2, {n}]")
    for e in edges:
        if not (0 <= e.i < n and 0 <= e.j < n):
            raise InvalidEdge(f"edge ({e.i}, {e.j}) references a frame outside 0..{n - 1}")
    out = poses.copy()
    rot = np.array([quat_to_matrix(q) for q in poses[:, :4]]) if n else np.zeros((0, 3, 3))
    for start, stop in window_bounds(n, T):
        local = [RelativePoseEdge(e.i - start, e.j - start, e.t, e.q) for e in edges
                 if start <= e.i < stop and start <= e.j < stop]
        out[start:stop, 4:] = refine_window(Window(poses[start:stop, 4:], rot[start:stop], tuple(local)))
    return out


def load_edges(path) -> list[RelativePoseEdge]:
    """Read ``i j tx ty tz qa qb qc qd`` lines (``#`` comments allowed)."""
    edges = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 9:
                raise InvalidEdge(f"line {lineno}: expected 9 fields, got {len(parts)}")
            try:
                i, j = int(parts[0]), int(parts[1])
                vals = [float(p) for p in parts[2:]]
            except ValueError as exc:
                raise InvalidEdge(f"line {lineno}: {exc}") from None
            edges.append(RelativePoseEdge(i, j, vals[:3], vals[3:]))
    return sorted(edges, key=lambda e: (e.i, e.j))


def save_edges(edges, path) -> None:
    with open(path, "w") as fh:
        for e in edges:
            fh.write(" ".join([str(e.i), str(e.j)] + [repr(v) for v in e.t + e.q]) + "\n")


def consistent_edges(poses, pairs=None) -> list[RelativePoseEdge]:
    """Edges that exactly agree with ``poses``; consecutive pairs by default."""
    poses = np.asarray(poses, dtype=np.float64)
    if pairs is None:
        pairs = [(i, i + 1) for i in range(poses.shape[0] - 1)]
    out = []
    for i, j in pairs:
        Ri = quat_to_matrix(poses[i, :4])
        Rj = quat_to_matrix(poses[j, :4])
        t = Ri.T @ (poses[j, 4:] - poses[i, 4:])
        Rij = Ri.T @ Rj
        out.append(RelativePoseEdge(i, j, tuple(t), tuple(matrix_to_quat(Rij))))
    return out


def matrix_to_quat(R) -> np.ndarray:
    R = np.asarray(R, dtype=np.float64)
    tr = np.trace(R)
    if tr > 0:
        s = 2.0 * np.sqrt(tr + 1.0)
        q = [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = 2.0 * np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
    elif R[1, 1] > R[2, 2]:
        s = 2.0 * np.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        q = [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
    else:
        s = 2.0 * np.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        q = [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
    return canonical_quaternion(q)
