"""Storage-scaling and query-latency benchmarks."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .data import ScalingFit, evaluate, fit_scaling_curve, generate_synthetic, timing_stats
from .errors import ClusterTooSmall, ConfigError, DecodeFailure, DegenerateFit, KTooLarge, TargetUnreachable
from .pipeline import ModelBundle, predict, storage_bytes, train
from .types import Dataset, TrainConfig

log = logging.getLogger(__name__)

BYTES_PER_MB = 1e6
LATENCY_WARMUP = 10


def default_r_grid(b: int = 16) -> list[int]:
    return sorted({10, 20, 50, 7 * b // 2, 7 * b})


DEFAULT_K_GRID = (1, 2, 4, 8)


@dataclass
class BenchSpec:
    N_list: list
    target_translation: float = 0.05
    target_rotation: float = 1.0
    r_grid: list = field(default_factory=default_r_grid)
    k_grid: list = field(default_factory=lambda: list(DEFAULT_K_GRID))
    repetitions: int = 1
    seed: int = 0
    b: int = 16
    d: int = 64
    k_true: int = 4
    noise_sigma: float = 0.01
    lam: float = 0.1
    threshold: float = 0.5
    css_strategy: str = "greedy"

    def __post_init__(self):
        if not self.N_list:
            raise ConfigError("N_list must not be empty")
        if any(b <= a for a, b in zip(self.N_list, self.N_list[1:])):
            raise ConfigError("N_list must be strictly increasing")
        if not (self.target_translation > 0 and self.target_rotation > 0):
            raise ConfigError("error targets must be positive")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        if any(r < 1 or r > 7 * self.b for r in self.r_grid) or any(k < 1 for k in self.k_grid):
            raise ConfigError("grid values out of range")
        # surfaces bad lambda / threshold / css before any training
        self.config(self.r_grid[0], self.k_grid[0])

    def config(self, r: int, k: int, rep: int = 0) -> TrainConfig:
        return TrainConfig(r=r, k=k, b=self.b, lam=self.lam, threshold=self.threshold,
                           seed=self.seed + rep, css_strategy=self.css_strategy)

    def grid(self) -> list[tuple[int, int, int]]:
        """(storage, r, k) triples in ascending storage order."""
        cells = {(storage_bytes(self.d, r, self.b, k), r, k) for r in self.r_grid for k in self.k_grid}
        return sorted(cells, key=lambda c: (c[0], c[2], c[1]))


@dataclass
class GridResult:
    N: int
    r: int
    k: int
    storage: int
    translation: float
    rotation: float
    failure_rate: float
    meets: bool
    error: str = ""


@dataclass
class ScalingResult:
    points: list  # (N, storage MB) for every N that met the targets
    chosen: dict  # N -> GridResult
    evaluated: list  # every GridResult in evaluation order
    unreachable: list
    fit: ScalingFit | None = None
    fit_error: str = ""

    def table(self) -> str:
        lines = [f"{'N':>7} {'r':>4} {'k':>3} {'bytes':>10} {'t_err(m)':>10} {'r_err(deg)':>10} {'fail':>6} ok"]
        for g in self.evaluated:
            mark = "*" if self.chosen.get(g.N) is g else ("y" if g.meets else "n")
            lines.append(f"{g.N:>7} {g.r:>4} {g.k:>3} {g.storage:>10} {g.translation:>10.4f} "
                         f"{g.rotation:>10.4f} {g.failure_rate:>6.3f} {mark}  {g.error}")
        lines.append("note: error targets are synthetic-benchmark thresholds, not published ones")
        if self.unreachable:
            lines.append("unreachable N: " + ", ".join(map(str, self.unreachable)))
        if self.fit is not None:
            lines.append(f"fit S[MB] = N^a + b: a={self.fit.a:.4f} b={self.fit.b_off:.4f} mse={self.fit.mse:.3e}")
        elif self.fit_error:
            lines.append(f"fit failed: {self.fit_error}")
        return "\n".join(lines)

    def as_dict(self) -> dict:
        out = {}
        for n, g in self.chosen.items():
            out[f"S_min_bytes_N{n}"] = g.storage
            out[f"config_N{n}"] = f"r{g.r}_k{g.k}"
        out["unreachable"] = ",".join(map(str, self.unreachable)) or "none"
        if self.fit is not None:
            out.update(a=self.fit.a, b=self.fit.b_off, mse=self.fit.mse)
        else:
            out["fit_error"] = self.fit_error
        return out


def evaluate_cell(spec: BenchSpec, N: int, r: int, k: int, data=None) -> GridResult:
    """Train and score one (r, k) cell, averaging errors over repetitions."""
    s = storage_bytes(spec.d, r, spec.b, k)
    ts, rs, fs = [], [], []
    for rep in range(spec.repetitions):
        train_set, test_set = data[rep] if data else _bench_data(spec, N, rep)
        try:
            bundle = train(train_set, spec.config(r, k, rep))
        except (ClusterTooSmall, KTooLarge) as exc:
            return GridResult(N, r, k, s, np.nan, np.nan, np.nan, False, type(exc).__name__)
        rep_ = evaluate(bundle, test_set, timed=False)
        ts.append(rep_.median_translation_error_m)
        rs.append(rep_.median_rotation_error_deg)
        fs.append(rep_.decode_failure_rate)
    t, rot, f = float(np.mean(ts)), float(np.mean(rs)), float(np.mean(fs))
    meets = bool(np.isfinite(t) and t <= spec.target_translation and rot <= spec.target_rotation)
    return GridResult(N, r, k, s, t, rot, f, meets)


def _bench_data(spec: BenchSpec, N: int, rep: int):
    # N training and N held-out items
    return generate_synthetic(spec.k_true, 2 * N, spec.d, spec.noise_sigma, seed=spec.seed + 1000 * rep + N)


def bench_scaling(spec: BenchSpec, exhaustive: bool = False) -> ScalingResult:
    """Smallest-storage grid cell meeting both targets, for each N, then a fit.

    Cells are tried in ascending storage order and the search stops at the
    first success unless ``exhaustive`` is set.
    """
    chosen, evaluated, unreachable = {}, [], []
    for N in spec.N_list:
        data = [_bench_data(spec, N, rep) for rep in range(spec.repetitions)]
        for _, r, k in spec.grid():
            g = evaluate_cell(spec, N, r, k, data)
            evaluated.append(g)
            log.info("N=%d r=%d k=%d bytes=%d t=%.4f rot=%.4f meets=%s", N, r, k, g.storage,
                     g.translation, g.rotation, g.meets)
            if g.meets and N not in chosen:
                chosen[N] = g
                if not exhaustive:
                    break
        if N not in chosen:
            unreachable.append(N)
            log.warning("%s", TargetUnreachable(N))
    points = [(N, chosen[N].storage / BYTES_PER_MB) for N in spec.N_list if N in chosen]
    result = ScalingResult(points, chosen, evaluated, unreachable)
    try:
        result.fit = fit_scaling_curve(points)
    except DegenerateFit as exc:
        result.fit_error = str(exc)
    return result


@dataclass
class LatencyResult:
    samples_ms: list
    stats: dict

    def as_dict(self) -> dict:
        out = {f"latency_ms_{k}": v for k, v in self.stats.items()}
        out["calls"] = len(self.samples_ms)
        return out


def bench_latency(bundle: ModelBundle, dataset: Dataset, repetitions: int = 1,
                  warmup: int = LATENCY_WARMUP) -> LatencyResult:
    """Per-call wall time of :func:`predict`, first ``warmup`` calls dropped."""
    if repetitions < 1:
        raise ConfigError("repetitions must be >= 1")
    if dataset.d != bundle.d:
        raise ConfigError(f"dataset dimension {dataset.d} does not match model dimension {bundle.d}")
    samples = []
    calls = 0
    for _ in range(repetitions):
        for x in dataset.X:
            t0 = time.perf_counter()
            try:
                predict(bundle, x)
            except DecodeFailure:  # still a full query
                pass
            dt = 1e3 * (time.perf_counter() - t0)
            calls += 1
            if calls > warmup:
                samples.append(dt)
    if not samples:
        raise ConfigError(f"need more than {warmup} calls to measure latency")
    return LatencyResult(samples, timing_stats(samples))
