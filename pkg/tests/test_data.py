import logging

import numpy as np
import pytest

from sasse.cluster import _sq_dists
from sasse.data import (
    EvalReport,
    evaluate,
    fit_scaling_curve,
    generate_scene,
    generate_synthetic,
    load_dataset,
    pose_errors,
    save_dataset,
    timing_stats,
)
from sasse.errors import DegenerateFit, InvalidPose, ParseError
from sasse.pgo import consistent_edges
from sasse.pipeline import train
from sasse.types import Dataset, TrainConfig

HEADER = "id,qa,qb,qc,qd,t1,t2,t3,f0,f1\n"


def write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestCsv:
    def test_one_row(self, tmp_path):
        ds = load_dataset(write(tmp_path, HEADER + "a,1,0,0,0,1,2,3,0.5,-0.5\n"))
        assert ds.n == 1 and ds.d == 2
        np.testing.assert_array_equal(ds.P[0], [1, 0, 0, 0, 1, 2, 3])

    def test_non_unit_quaternion_warns(self, tmp_path, caplog):
        with caplog.at_level(logging.WARNING):
            ds = load_dataset(write(tmp_path, HEADER + "a,-1.001,0,0,0,1,2,3,0.5,-0.5\n"))
        np.testing.assert_allclose(ds.P[0, :4], [1, 0, 0, 0])
        assert "renormalized" in caplog.text

    def test_nan_descriptor(self, tmp_path):
        text = HEADER + "a,1,0,0,0,1,2,3,0.5,0.5\nb,1,0,0,0,1,2,3,nan,0.5\n"
        with pytest.raises(ParseError) as info:
            load_dataset(write(tmp_path, text))
        assert info.value.line == 3
        assert "'b'" in str(info.value)

    def test_zero_quaternion(self, tmp_path):
        with pytest.raises(InvalidPose):
            load_dataset(write(tmp_path, HEADER + "a,0,0,0,0,1,2,3,0.5,-0.5\n"))

    @pytest.mark.parametrize("text", [
        "", "id,qa,qb\n", HEADER, HEADER + "a,1,0,0,0,1,2,3,0.5\n", HEADER + "a,1,0,0,0,1,2,x,0.5,1\n",
        HEADER + "a,1,0,0,0,1,2,3,0.5,1\na,1,0,0,0,1,2,3,0.5,1\n",
    ])
    def test_malformed(self, tmp_path, text):
        with pytest.raises(ParseError):
            load_dataset(write(tmp_path, text))

    def test_round_trip(self, tmp_path):
        train_set, _ = generate_synthetic(2, 40, 8, 0.01, seed=1)
        save_dataset(train_set, tmp_path / "x.csv")
        back = load_dataset(tmp_path / "x.csv")
        assert back.ids == train_set.ids
        np.testing.assert_array_equal(back.X, train_set.X)
        np.testing.assert_array_equal(back.P, train_set.P)


class TestGenerator:
    def test_deterministic(self, tmp_path):
        for name in ("a", "b"):
            tr, te = generate_synthetic(4, 100, 16, 0.01, seed=9)
            save_dataset(tr, tmp_path / f"{name}_tr.csv")
            save_dataset(te, tmp_path / f"{name}_te.csv")
        for part in ("tr", "te"):
            assert (tmp_path / f"a_{part}.csv").read_bytes() == (tmp_path / f"b_{part}.csv").read_bytes()

    def test_split_and_ids(self):
        tr, te = generate_synthetic(3, 101, 16, 0.01, seed=2)
        assert tr.n == 50 and te.n == 51
        assert not set(tr.ids) & set(te.ids)

    def test_noiseless_affine(self):
        tr, te = generate_synthetic(1, 200, 32, 0.0, seed=4)
        X = np.vstack([tr.X, te.X])
        P = np.vstack([tr.P, te.P])
        A = np.hstack([P, np.ones((len(P), 1))])
        coef = np.linalg.lstsq(A, X, rcond=None)[0]
        assert np.linalg.norm(A @ coef - X) < 1e-9 * np.linalg.norm(X)
        # rank of [descriptors | 1] is at most that of [poses | 1]
        assert np.linalg.matrix_rank(np.hstack([X, np.ones((len(X), 1))])) <= 8

    @pytest.mark.parametrize("sigma", [0.0, 0.01])
    def test_nearest_centroid_recovers_labels(self, sigma):
        scene = generate_scene(4, 800, 64, sigma, seed=3)
        centroids = np.vstack([scene.train.X[scene.train_labels == c].mean(0) for c in range(4)])
        got = np.argmin(_sq_dists(scene.test.X, centroids), axis=1)
        assert np.array_equal(got, scene.test_labels)

    def test_unit_canonical_quaternions(self):
        tr, _ = generate_synthetic(4, 100, 16, 0.01, seed=0)
        np.testing.assert_allclose(np.linalg.norm(tr.P[:, :4], axis=1), 1.0, atol=1e-12)
        assert np.all(tr.P[:, 0] >= 0)


class TestEvaluate:
    def test_perfect_predictions(self, rng):
        pose = np.array([1.0, 0, 0, 0, 0.5, 0.25, 2.0])  # exactly representable in binary16
        ds = Dataset(tuple("abcdefgh"), rng.normal(size=(8, 6)), np.tile(pose, (8, 1)))
        rep = evaluate(train(ds, TrainConfig(r=10)), ds)
        assert rep.median_translation_error_m == 0.0
        assert rep.median_rotation_error_deg == 0.0
        assert rep.decode_failure_rate == 0.0
        assert set(rep.query_time_ms) == {"median", "q1", "q3", "min", "max"}

    def test_memorization_bound(self):
        tr, _ = generate_synthetic(1, 128, 128, 0.01, seed=5)
        rep = evaluate(train(tr, TrainConfig(r=112, lam=1e-8)), tr, timed=False)
        bound = 2.0**-11 * np.max(np.abs(tr.P[:, 4:])) * 2
        assert rep.median_translation_error_m <= bound
        assert rep.decode_failure_rate == 0.0

    def test_timed_and_batched_agree(self):
        tr, te = generate_synthetic(2, 200, 16, 0.01, seed=1)
        model = train(tr, TrainConfig(r=20, k=2))
        a = evaluate(model, te)
        b = evaluate(model, te, timed=False)
        assert a.median_translation_error_m == b.median_translation_error_m
        assert a.per_cluster_routing_accuracy == b.per_cluster_routing_accuracy
        assert len(a.per_cluster_routing_accuracy) == 2

    def test_refinement_with_true_edges(self):
        tr, te = generate_synthetic(1, 200, 16, 0.01, seed=1)
        model = train(tr, TrainConfig(r=20))
        plain = evaluate(model, te, timed=False)
        ref = evaluate(model, te, edges=consistent_edges(te.P), window_size=10, timed=False)
        assert ref.refined
        assert ref.median_translation_error_m < plain.median_translation_error_m

    def test_report_rendering(self):
        rep = EvalReport(3, float("nan"), float("nan"), 1.0, [0.5], {}, False)
        assert "medians undefined" in rep.to_table()
        kv = rep.to_kv()
        assert "medians_defined=false" in kv and "decode_failure_rate=1.0" in kv

    def test_pose_errors(self):
        a = np.array([[1.0, 0, 0, 0, 0, 0, 0]])
        b = np.array([[0.0, 0, 0, 1, 3, 4, 0]])
        et, er = pose_errors(a, b)
        assert et[0] == 5.0 and er[0] == pytest.approx(180.0)

    def test_timing_stats(self):
        s = timing_stats([1.0, 2.0, 3.0, 4.0, 5.0])
        assert (s["median"], s["q1"], s["q3"], s["min"], s["max"]) == (3.0, 2.0, 4.0, 1.0, 5.0)


class TestScalingFit:
    N = np.array([500, 1000, 2000, 4000, 8000], dtype=float)

    def test_recovers_generating_model(self):
        f = fit_scaling_curve(zip(self.N, self.N**0.3 + 2))
        assert f.a == pytest.approx(0.3, abs=1e-3)
        assert f.b_off == pytest.approx(2.0, abs=1e-3)
        assert f.mse < 1e-8

    def test_recovers_negative_offset(self):
        f = fit_scaling_curve(zip(self.N, self.N**0.28 - 4.8))
        assert f.a == pytest.approx(0.28, abs=1e-3)
        assert f.b_off == pytest.approx(-4.8, abs=1e-3)
        np.testing.assert_allclose(f.predict(self.N), self.N**0.28 - 4.8, atol=1e-6)

    def test_two_points(self):
        with pytest.raises(DegenerateFit):
            fit_scaling_curve([(100, 1.0), (200, 2.0)])

    def test_equal_n(self):
        with pytest.raises(DegenerateFit):
            fit_scaling_curve([(100, 1.0), (100, 2.0), (100, 3.0)])

    def test_mse_is_minimal_over_a(self):
        rng = np.random.default_rng(0)
        S = self.N**0.5 + 1 + rng.normal(scale=0.5, size=5)
        f = fit_scaling_curve(zip(self.N, S))
        for a in np.linspace(0.01, 2, 400):
            b = np.mean(S - self.N**a)
            assert np.mean((self.N**a + b - S) ** 2) >= f.mse - 1e-9


def test_evaluate_permutation_invariant():
    tr, te = generate_synthetic(2, 200, 16, 0.01, seed=6)
    model = train(tr, TrainConfig(r=20, k=2))
    p = np.random.default_rng(0).permutation(te.n)
    a = evaluate(model, te, timed=False)
    b = evaluate(model, te.subset(p), timed=False)
    assert a.median_translation_error_m == b.median_translation_error_m
    assert a.median_rotation_error_deg == b.median_rotation_error_deg
    assert a.per_cluster_routing_accuracy == b.per_cluster_routing_accuracy
