"""``sasse`` command line.

Exit codes: 0 success, 1 runtime error, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
import time

import numpy as np

from . import bundle as bundle_io
from .bench import BenchSpec, bench_latency, bench_scaling, default_r_grid, DEFAULT_K_GRID
from .codec import COMPONENTS
from .data import evaluate, generate_scene, load_dataset, save_dataset
from .errors import ConfigError, DecodeFailure, SasseError
from .pgo import consistent_edges, load_edges, refine_trajectory, save_edges, RelativePoseEdge
from .pipeline import predict, train
from .types import CSS_STRATEGIES, TrainConfig

log = logging.getLogger("sasse")


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _write_report(path, items: dict):
    if not path:
        return
    with open(path, "w") as fh:
        for k, v in items.items():
            if isinstance(v, bool):
                v = str(v).lower()
            elif isinstance(v, float):
                v = repr(float(v))
            fh.write(f"{k}={v}\n")


def _config_from(args) -> TrainConfig:
    return TrainConfig(r=args.r, k=args.k, b=args.b, lam=args.lam, threshold=args.threshold,
                       seed=args.seed, css_strategy=args.css, standardize=args.standardize)


def cmd_synth(args):
    scene = generate_scene(args.k_true, args.n, args.d, args.noise, args.seed)
    # test items grouped by scene cluster so the file reads as k short trajectories
    order = np.argsort(scene.test_labels, kind="stable")
    test = scene.test.subset(order)
    labels = scene.test_labels[order]
    save_dataset(scene.train, args.train_out)
    save_dataset(test, args.test_out)
    print(f"wrote {scene.train.n} training items to {args.train_out}")
    print(f"wrote {test.n} test items to {args.test_out}")
    if args.edges_out:
        rng = np.random.default_rng(args.seed + 1)
        pairs = [(i, i + 1) for i in range(test.n - 1) if labels[i] == labels[i + 1]]
        edges = []
        for e in consistent_edges(test.P, pairs):
            t = np.asarray(e.t) + rng.normal(0.0, args.edge_noise, 3)
            edges.append(RelativePoseEdge(e.i, e.j, tuple(t), e.q))
        save_edges(edges, args.edges_out)
        print(f"wrote {len(edges)} within-cluster consecutive test edges to {args.edges_out}")
    return 0


def cmd_train(args):
    cfg = _config_from(args)
    data = load_dataset(args.dataset)
    t0 = time.perf_counter()
    model = train(data, cfg)
    wall = time.perf_counter() - t0
    sizes = bundle_io.save(model, args.out)
    report = {
        "storage_bytes": model.storage_bytes(),
        "parameter_bytes": sizes.parameter_bytes,
        "index_bytes": sizes.index_bytes,
        "aux_bytes": sizes.aux_bytes,
        "manifest_bytes": sizes.manifest_bytes,
        "train_seconds": wall,
        "n_train": data.n,
        "d": data.d,
    }
    for key, val in report.items():
        print(f"{key}: {val:.3f}" if isinstance(val, float) else f"{key}: {val}")
    _write_report(args.report_file, report)
    return 0


def cmd_predict(args):
    model = bundle_io.load(args.model)
    data = load_dataset(args.dataset)
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    failures = 0
    try:
        w = csv.writer(out)
        w.writerow(["id", *COMPONENTS, "status"])
        for id_, x in zip(data.ids, data.X):
            try:
                p = predict(model, x)
            except DecodeFailure as exc:
                failures += 1
                w.writerow([id_] + [""] * 7 + [f"fail:{exc.component_index}:{exc.reason}"])
            else:
                w.writerow([id_] + [repr(float(v)) for v in p.as_array()] + ["ok"])
    finally:
        if args.out:
            out.close()
    print(f"{data.n - failures} predicted, {failures} decode failure(s)", file=sys.stderr)
    return 0


def cmd_eval(args):
    model = bundle_io.load(args.model)
    data = load_dataset(args.dataset)
    edges = load_edges(args.edges) if args.edges else None
    report = evaluate(model, data, edges=edges, window_size=args.window_size)
    print(report.to_table())
    _write_report(args.report_file, report.as_dict())
    return 0


def _read_poses(path):
    ids, poses = [], []
    with open(path, newline="") as fh:
        rows = csv.DictReader(fh)
        for row in rows:
            if row.get("status", "ok") != "ok":
                raise ConfigError(f"pose file contains a failed prediction for {row['id']!r}")
            ids.append(row["id"])
            poses.append([float(row[c]) for c in COMPONENTS])
    return ids, np.array(poses).reshape(-1, 7)


def cmd_refine(args):
    ids, poses = _read_poses(args.poses)
    edges = load_edges(args.edges)
    refined = refine_trajectory(poses, edges, args.window_size)
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(out)
        w.writerow(["id", *COMPONENTS])
        for id_, p in zip(ids, refined):
            w.writerow([id_] + [repr(float(v)) for v in p])
    finally:
        if args.out:
            out.close()
    return 0


def cmd_bench_scaling(args):
    spec = BenchSpec(
        N_list=args.n_list, target_translation=args.target_t, target_rotation=args.target_r,
        r_grid=args.r_grid or default_r_grid(args.b), k_grid=args.k_grid or list(DEFAULT_K_GRID),
        repetitions=args.repetitions, seed=args.seed, b=args.b, d=args.d, k_true=args.k_true,
        noise_sigma=args.noise, lam=args.lam, threshold=args.threshold, css_strategy=args.css,
    )
    result = bench_scaling(spec, exhaustive=args.exhaustive)
    print(result.table())
    _write_report(args.report_file, result.as_dict())
    return 0 if result.fit is not None else 1


def cmd_bench_latency(args):
    if args.repetitions < 1:
        raise ConfigError("--repetitions must be >= 1")
    model = bundle_io.load(args.model)
    data = load_dataset(args.dataset)
    res = bench_latency(model, data, args.repetitions)
    s = res.stats
    print(f"calls measured: {len(res.samples_ms)} (first 10 excluded)")
    print(f"median {s['median']:.4f} ms   q1 {s['q1']:.4f} ms   q3 {s['q3']:.4f} ms")
    _write_report(args.report_file, res.as_dict())
    return 0


def _add_train_flags(p):
    p.add_argument("--r", type=int, default=50, help="embedding size")
    p.add_argument("--k", type=int, default=1, help="cluster count")
    p.add_argument("--b", type=int, default=16, choices=(16, 32, 64), help="bit precision")
    p.add_argument("--lambda", dest="lam", type=float, default=0.1, help="ridge regularizer")
    p.add_argument("--threshold", type=float, default=0.5, help="bit decision threshold")
    p.add_argument("--css", choices=CSS_STRATEGIES, default="greedy")
    p.add_argument("--standardize", action="store_true", help="scale descriptor columns before the ridge fit")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sasse", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(func=func)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--report-file", help="also write key=value results here")
        return p

    p = add("synth", cmd_synth, "generate a synthetic train/test pair")
    p.add_argument("train_out")
    p.add_argument("test_out")
    p.add_argument("--k-true", type=int, default=4)
    p.add_argument("--n", type=int, default=2000, help="total items (split 50/50)")
    p.add_argument("--d", type=int, default=64)
    p.add_argument("--noise", type=float, default=0.01)
    p.add_argument("--edges-out", help="write noisy consecutive edges for the test set")
    p.add_argument("--edge-noise", type=float, default=0.005)

    p = add("train", cmd_train, "train a model bundle")
    p.add_argument("dataset")
    p.add_argument("--out", required=True)
    _add_train_flags(p)

    p = add("predict", cmd_predict, "predict poses for a dataset")
    p.add_argument("model")
    p.add_argument("dataset")
    p.add_argument("--out")

    p = add("eval", cmd_eval, "evaluate a model on a labelled dataset")
    p.add_argument("model")
    p.add_argument("dataset")
    p.add_argument("--edges", help="relative pose file enabling PGO refinement")
    p.add_argument("--window-size", type=int, default=5)

    p = add("refine", cmd_refine, "refine a predicted trajectory with relative poses")
    p.add_argument("poses", help="CSV with id,qa,qb,qc,qd,t1,t2,t3 columns")
    p.add_argument("edges")
    p.add_argument("--window-size", type=int, default=5)
    p.add_argument("--out")

    p = add("bench-scaling", cmd_bench_scaling, "smallest storage meeting error targets vs N")
    p.add_argument("--n-list", type=_int_list, default=[500, 1000, 2000, 4000, 8000])
    p.add_argument("--target-t", type=float, default=0.05, help="median translation target, m")
    p.add_argument("--target-r", type=float, default=1.0, help="median rotation target, deg")
    p.add_argument("--r-grid", type=_int_list)
    p.add_argument("--k-grid", type=_int_list)
    p.add_argument("--repetitions", type=int, default=1)
    p.add_argument("--b", type=int, default=16, choices=(16, 32, 64))
    p.add_argument("--lambda", dest="lam", type=float, default=0.1)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--css", choices=CSS_STRATEGIES, default="greedy")
    p.add_argument("--d", type=int, default=64)
    p.add_argument("--k-true", type=int, default=4)
    p.add_argument("--noise", type=float, default=0.01)
    p.add_argument("--exhaustive", action="store_true", help="evaluate every grid cell")

    p = add("bench-latency", cmd_bench_latency, "per-query latency of a model")
    p.add_argument("model")
    p.add_argument("dataset")
    p.add_argument("--repetitions", type=int, default=1)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (SasseError, OSError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
