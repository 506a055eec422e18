import itertools

import numpy as np
import pytest

from conftest import random_binary
from sasse.embed import (
    BruteforceTooLarge,
    component_coverage,
    css_residual,
    fit_projection,
    greedy_trajectory,
    pseudo_inverse,
    select_columns,
)


def gram_schmidt_projector(A, tol=1e-9):
    """Orthogonal projector onto range(A) built column by column."""
    basis = []
    for col in A.T.astype(float):
        v = col.copy()
        for _ in range(2):  # re-orthogonalize once
            for q in basis:
                v -= (q @ v) * q
        n = np.linalg.norm(v)
        if n > tol * max(1.0, np.linalg.norm(col)):
            basis.append(v / n)
    Q = np.array(basis).T if basis else np.zeros((A.shape[0], 0))
    return Q @ Q.T


def oracle_residual(Y, C):
    P = gram_schmidt_projector(Y[:, list(C)])
    return np.linalg.norm(Y - P @ Y)


class TestResidual:
    def test_all_columns_zero(self, rng):
        Y = random_binary(rng, 15, 8)
        assert css_residual(Y, range(8)) == pytest.approx(0.0, abs=1e-10)

    def test_rank_one_duplicate_columns(self):
        col = np.array([1, 0, 1, 1, 0])
        Y = np.column_stack([col, col, col])
        assert css_residual(Y, [1]) == pytest.approx(0.0, abs=1e-12)

    def test_matches_projector_oracle(self, rng):
        for _ in range(20):
            Y = random_binary(rng, 12, 6)
            C = rng.choice(6, 2, replace=False)
            assert css_residual(Y, C) == pytest.approx(oracle_residual(Y, C), rel=1e-10, abs=1e-12)

    def test_rank_deficient_subset(self):
        Y = np.array([[1, 1, 0], [1, 1, 1], [0, 0, 1], [1, 1, 0]])
        assert css_residual(Y, [0, 1]) == pytest.approx(oracle_residual(Y, [0, 1]))

    def test_rejects_non_binary(self):
        with pytest.raises(ValueError):
            css_residual(np.array([[0.5, 1]]), [0])


class TestSelection:
    @pytest.mark.parametrize("strategy", ["greedy", "sampled", "bruteforce"])
    def test_exact_span_found(self, strategy):
        r = 3
        I = np.eye(r, dtype=np.uint8)
        Y = np.hstack([I, I[:, [0]], I[:, [2]], I[:, [1]]])
        Y = np.vstack([Y, Y])
        C = select_columns(Y, r, strategy, seed=3)
        assert len(C) == r
        assert css_residual(Y, C) == pytest.approx(0.0, abs=1e-10)

    def test_full_rank_selection(self, rng):
        Y = random_binary(rng, 30, 14)
        C = select_columns(Y, 14)
        assert sorted(C.tolist()) == list(range(14))
        assert css_residual(Y, C) == pytest.approx(0.0, abs=1e-10)

    def test_greedy_not_better_than_bruteforce(self, rng):
        for _ in range(5):
            Y = random_binary(rng, 20, 10)
            best = min(oracle_residual(Y, C) for C in itertools.combinations(range(10), 3))
            Cb = select_columns(Y, 3, "bruteforce")
            Cg = select_columns(Y, 3, "greedy")
            assert css_residual(Y, Cb) == pytest.approx(best, rel=1e-9)
            assert css_residual(Y, Cg) >= css_residual(Y, Cb) - 1e-9

    def test_greedy_trajectory_monotone(self, rng):
        Y = random_binary(rng, 60, 40, p=0.3)
        C, res = greedy_trajectory(Y, 40)
        assert np.all(np.diff(res) <= 1e-9)
        assert res[-1] == pytest.approx(0.0, abs=1e-6)
        for j in (0, 5, 17):
            assert res[j] == pytest.approx(css_residual(Y, C[: j + 1]), rel=1e-7, abs=1e-7)

    def test_greedy_deterministic_lowest_index_ties(self):
        Y = np.eye(4, dtype=np.uint8)
        assert select_columns(Y, 2).tolist() == [0, 1]

    def test_sampled_seeded(self, rng):
        Y = random_binary(rng, 25, 16)
        a = select_columns(Y, 4, "sampled", seed=7)
        b = select_columns(Y, 4, "sampled", seed=7)
        assert a.tolist() == b.tolist()

    def test_ordering_bruteforce_greedy_sampled(self, rng):
        for _ in range(5):
            Y = random_binary(rng, 20, 10)
            rb = css_residual(Y, select_columns(Y, 3, "bruteforce"))
            rg = css_residual(Y, select_columns(Y, 3, "greedy"))
            rs = css_residual(Y, select_columns(Y, 3, "sampled", seed=1))
            assert rb <= rg + 1e-9
            assert rb <= rs + 1e-9

    def test_bruteforce_too_large(self):
        Y = np.zeros((3, 112), dtype=np.uint8)
        with pytest.raises(BruteforceTooLarge):
            select_columns(Y, 10, "bruteforce")

    def test_coverage(self):
        assert component_coverage([0, 1, 16, 111], 16) == [2, 1, 0, 0, 0, 0, 1]


class TestProjection:
    def test_full_columns_reconstruct(self, rng):
        Y = random_binary(rng, 40, 10)
        assert np.linalg.matrix_rank(Y) == 10
        emb, Yc = fit_projection(Y, range(10))
        assert np.linalg.norm(Yc @ emb.Z - Y) < 1e-10

    def test_orthonormal_columns(self):
        Y = np.array([[1, 0, 1], [0, 1, 1], [0, 0, 0]], dtype=np.uint8)
        emb, Yc = fit_projection(Y, [0, 1])
        np.testing.assert_allclose(emb.Z, Yc.T @ Y, atol=1e-14)

    def test_penrose_conditions(self, rng):
        Y = random_binary(rng, 50, 14)
        C = select_columns(Y, 5)
        emb, A = fit_projection(Y, C)
        Ap = pseudo_inverse(A)
        np.testing.assert_allclose(Ap @ Y, emb.Z, atol=1e-12)
        for lhs, rhs in [(A @ Ap @ A, A), (Ap @ A @ Ap, Ap),
                         ((A @ Ap).T, A @ Ap), ((Ap @ A).T, Ap @ A)]:
            np.testing.assert_allclose(lhs, rhs, atol=1e-8)

    def test_residual_identity(self, rng):
        Y = random_binary(rng, 40, 21, p=0.4)
        C = select_columns(Y, 6)
        emb, Yc = fit_projection(Y, C)
        assert np.linalg.norm(Y - Yc @ emb.Z) == pytest.approx(css_residual(Y, C), rel=1e-9)

