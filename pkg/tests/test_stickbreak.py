import math

import numpy as np
import pytest

from redslds.distributions import info_to_moment, sample_pg1_batch
from redslds.stickbreak import (
    PGAuxiliaries,
    StickRegression,
    kappa_vec,
    log_pmf_sb,
    log_pmf_sb_all,
    pi_sb,
    regression_row_posterior,
    sample_pg_aux,
)


class TestPiSb:
    def test_zero_logits(self):
        probs = pi_sb(np.zeros(3))
        assert np.allclose(probs, [0.5, 0.25, 0.125, 0.125], atol=1e-15)

    def test_worked_example(self):
        # sigma(1) = 0.7310586, sigma(-1) = 0.2689414, products by hand
        probs = pi_sb(np.array([1.0, -1.0]))
        assert np.abs(probs - [0.731059, 0.072330, 0.196612]).max() < 1e-5

    def test_saturated_first_stick(self):
        probs = pi_sb(np.array([40.0, 0.0]))
        assert np.abs(probs - [1.0, 0.0, 0.0]).max() < 1e-15

    def test_normalization_random(self):
        rng = np.random.default_rng(51)
        for _ in range(10_000):
            length = rng.integers(1, 8)
            v = rng.uniform(-10, 10, size=length)
            assert abs(pi_sb(v).sum() - 1.0) < 1e-12

    def test_single_category_edge(self):
        assert np.allclose(pi_sb(np.zeros(0)), [1.0])


class TestLogPmf:
    def test_first_outcome_zero_logits(self):
        assert log_pmf_sb(1, np.zeros(3)) == pytest.approx(math.log(0.5))

    def test_matches_pi_sb(self):
        rng = np.random.default_rng(52)
        for _ in range(100):
            length = rng.integers(1, 7)
            v = rng.uniform(-8, 8, size=length)
            outcome = int(rng.integers(1, length + 2))
            assert math.exp(log_pmf_sb(outcome, v)) == pytest.approx(
                pi_sb(v)[outcome - 1], abs=1e-12
            )

    def test_worked_example(self):
        assert log_pmf_sb(3, np.array([1.0, -1.0])) == pytest.approx(
            math.log(0.196612), abs=1e-5
        )

    def test_vectorized_all_categories(self):
        v = np.array([[0.5, -0.3], [2.0, 1.0]])
        out = log_pmf_sb_all(v)
        for i in range(2):
            for k in range(3):
                assert out[i, k] == pytest.approx(log_pmf_sb(k + 1, v[i]), abs=1e-12)

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            log_pmf_sb(0, np.zeros(2))
        with pytest.raises(ValueError):
            log_pmf_sb(4, np.zeros(2))


class TestKappa:
    def test_middle_outcome(self):
        assert np.allclose(kappa_vec(2, 4), [-0.5, 0.5, 0.0])

    def test_first_outcome(self):
        assert np.allclose(kappa_vec(1, 4), [0.5, 0.0, 0.0])

    def test_last_outcome(self):
        assert np.allclose(kappa_vec(4, 4), [-0.5, -0.5, -0.5])

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            kappa_vec(5, 4)


class TestPgAux:
    def test_first_outcome_single_active(self):
        rng = np.random.default_rng(61)
        aux = sample_pg_aux(1, np.array([0.4, -0.2, 1.0]), rng)
        assert aux.omega[0] > 0
        assert aux.omega[1] == 0 and aux.omega[2] == 0

    def test_last_outcome_all_active(self):
        rng = np.random.default_rng(62)
        aux = sample_pg_aux(4, np.array([0.4, -0.2, 1.0]), rng)
        assert np.all(aux.omega > 0)

    def test_first_row_moment(self):
        rng = np.random.default_rng(63)
        draws = np.array(
            [sample_pg_aux(2, np.array([2.0, 0.0]), rng).omega[0] for _ in range(100_000)]
        )
        exact = math.tanh(1.0) / 4.0
        se = draws.std() / math.sqrt(draws.size)
        assert abs(draws.mean() - exact) < 4 * se


class TestRowPosterior:
    def test_empty_data_returns_prior(self):
        mean = np.array([0.5, -1.0])
        cov = np.array([[2.0, 0.0], [0.0, 4.0]])
        post = regression_row_posterior(mean, cov, [])
        assert np.allclose(post.lam, np.linalg.inv(cov))
        assert np.allclose(post.theta, np.linalg.inv(cov) @ mean)

    def test_single_datum_hand_computed(self):
        post = regression_row_posterior(
            np.zeros(2), np.eye(2), [(np.array([1.0]), 0.5, 1.0)]
        )
        assert np.allclose(post.lam, [[2.0, 1.0], [1.0, 2.0]])
        assert np.allclose(post.theta, [0.5, 0.5])

    def test_concentration_on_weighted_least_squares(self):
        rng = np.random.default_rng(71)
        xs = rng.standard_normal(10_000)
        omegas = rng.uniform(0.5, 2.0, size=10_000)
        kappas = rng.uniform(-0.5, 0.5, size=10_000)
        data = [(np.array([x]), k, w) for x, k, w in zip(xs, kappas, omegas)]
        post = regression_row_posterior(np.zeros(2), np.eye(2), data)
        mean, _ = info_to_moment(post)
        design = np.column_stack([xs, np.ones_like(xs)])
        direct = np.linalg.solve(
            (design * omegas[:, None]).T @ design, design.T @ kappas
        )
        assert np.abs(mean - direct).max() < 5e-3

    def test_order_invariance(self):
        rng = np.random.default_rng(72)
        data = [
            (rng.standard_normal(2), float(rng.uniform(-0.5, 0.5)), float(rng.uniform(0.1, 2)))
            for _ in range(50)
        ]
        a = regression_row_posterior(np.zeros(3), np.eye(3), data)
        perm = [data[i] for i in rng.permutation(50)]
        b = regression_row_posterior(np.zeros(3), np.eye(3), perm)
        assert np.abs(a.lam - b.lam).max() < 1e-12
        assert np.abs(a.theta - b.theta).max() < 1e-12

    def test_rejects_zero_omega(self):
        with pytest.raises(ValueError):
            regression_row_posterior(np.zeros(2), np.eye(2), [(np.array([1.0]), 0.5, 0.0)])


def test_marginalization_identity():
    # Averaging the augmented Gaussian potential over PG(1, 0) draws recovers
    # the stick-breaking likelihood up to a factor constant in x: the ratio
    # between two regressor points must match.
    rng = np.random.default_rng(81)
    reg = StickRegression(weights=np.array([[0.8], [-0.6]]), bias=np.array([-0.3, 0.4]))
    outcome = 2  # both stick rows active for L = 3
    x_a, x_b = np.array([0.3]), np.array([-1.1])

    n = 1_000_000
    omega = np.column_stack(
        [sample_pg1_batch(np.zeros(n), rng), sample_pg1_batch(np.zeros(n), rng)]
    )
    kappa = kappa_vec(outcome, 3)

    def augmented(x):
        v = reg.logits(x)
        return np.exp(kappa @ v - 0.5 * omega @ (v * v))

    ga, gb = augmented(x_a), augmented(x_b)
    log_ratio_mc = math.log(ga.mean()) - math.log(gb.mean())
    log_ratio_exact = log_pmf_sb(outcome, reg.logits(x_a)) - log_pmf_sb(
        outcome, reg.logits(x_b)
    )
    # delta-method standard error of the log of each mean, common draws
    se = math.sqrt(
        ga.var() / (n * ga.mean() ** 2) + gb.var() / (n * gb.mean() ** 2)
    )
    assert abs(log_ratio_mc - log_ratio_exact) < 4 * se + 1e-4
