"""Grid posterior: updates, entropy, summaries, predictive."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import gaussian_posterior
from seqgain import (EmptyWindowError, GridPosterior, ImpossibleObservationError,
                     ParameterGrid, PsychometricModel, bayes_update,
                     differential_entropy, local_summary, posterior_from_density,
                     predictive, regular_grid, summarize, uniform_posterior)


def two_point_grid(a=-1.0, b=1.0):
    pts = np.array([[a], [b]])
    return ParameterGrid(points=pts, spacing=np.array([b - a]),
                         lower=np.array([a - 0.5]), upper=np.array([b + 0.5]))


class FixedLikelihoodModel:
    """Two-point model with explicit detection probabilities."""

    def __init__(self, p1_by_cell):
        self.p1 = np.asarray(p1_by_cell, dtype=float)

    def loglik_grid(self, y, points, x):
        p = self.p1 if y == 1 else 1.0 - self.p1
        with np.errstate(divide="ignore"):
            return np.log(p)

    def outcome_table(self, post, x):
        return np.array([0.0, 1.0]), np.stack([1.0 - self.p1, self.p1])


class TestBayesUpdate:
    def test_identical_likelihoods_leave_posterior_unchanged(self):
        post = uniform_posterior(two_point_grid())
        model = FixedLikelihoodModel([0.7, 0.7])
        updated = bayes_update(post, model, 0.0, 1.0)
        np.testing.assert_allclose(updated.weights, post.weights, atol=1e-15)

    def test_two_point_bayes_rule_by_hand(self):
        post = uniform_posterior(two_point_grid())
        model = FixedLikelihoodModel([0.8, 0.2])
        updated = bayes_update(post, model, 0.0, 1.0)
        np.testing.assert_allclose(updated.weights, [0.8, 0.2], atol=1e-15)

    def test_matches_extended_precision_product_oracle(self):
        # 50 updates on a 512-cell grid vs a 60-digit recomputation of the
        # same likelihood products
        mpmath = pytest.importorskip("mpmath")
        mpmath.mp.dps = 60

        grid = regular_grid([0.0], [100.0], 512)
        model = PsychometricModel()
        rng = np.random.default_rng(42)
        xs = rng.uniform(30.0, 70.0, size=50)
        ys = rng.integers(0, 2, size=50).astype(float)

        post = uniform_posterior(grid)
        for x, y in zip(xs, ys):
            post = bayes_update(post, model, float(x), float(y))

        theta = grid.points[:, 0]
        logs = [mpmath.mpf(0) for _ in theta]
        for x, y in zip(xs, ys):
            for i, th in enumerate(theta):
                p1 = 1 / (1 + mpmath.e ** (-(mpmath.mpf(th) - mpmath.mpf(x))))
                logs[i] += mpmath.log(p1 if y == 1 else 1 - p1)
            m = max(logs)
        m = max(logs)
        raw = [mpmath.e ** (v - m) for v in logs]
        total = sum(raw)
        expected = np.array([float(v / total) for v in raw])
        np.testing.assert_allclose(post.weights, expected, atol=1e-10)

    def test_impossible_observation_raises(self):
        post = uniform_posterior(two_point_grid())
        model = FixedLikelihoodModel([0.0, 0.0])
        with pytest.raises(ImpossibleObservationError):
            bayes_update(post, model, 0.0, 1.0)

    def test_input_posterior_unchanged(self):
        post = uniform_posterior(two_point_grid())
        before = post.log_weights.copy()
        bayes_update(post, FixedLikelihoodModel([0.8, 0.2]), 0.0, 1.0)
        np.testing.assert_array_equal(post.log_weights, before)


class TestDifferentialEntropy:
    @pytest.mark.parametrize("cells", [64, 256, 1024])
    def test_uniform_on_interval_is_log_length(self, cells):
        post = uniform_posterior(regular_grid([0.0], [100.0], cells))
        assert differential_entropy(post) == pytest.approx(np.log(100.0), abs=1e-12)

    def test_point_mass_is_log_cell_width(self):
        grid = regular_grid([0.0], [10.0], 100)
        lw = np.full(100, -np.inf)
        lw[37] = 0.0
        post = GridPosterior(grid=grid, log_weights=lw)
        assert differential_entropy(post) == pytest.approx(np.log(0.1), abs=1e-12)

    def test_discretized_standard_normal_matches_closed_form(self):
        grid = regular_grid([-10.0], [10.0], 20000)
        post = gaussian_posterior(grid, 0.0, 1.0)
        expected = 0.5 * np.log(2 * np.pi * np.e)
        assert differential_entropy(post) == pytest.approx(expected, abs=1e-4)


class TestSummarize:
    def test_symmetric_two_point(self):
        post = uniform_posterior(two_point_grid(-1.0, 1.0))
        s = summarize(post)
        assert s.mean[0] == pytest.approx(0.0, abs=1e-15)
        assert s.covariance[0, 0] == pytest.approx(1.0, abs=1e-15)

    def test_point_mass(self):
        grid = regular_grid([0.0], [10.0], 100)
        lw = np.full(100, -np.inf)
        idx = int(np.argmin(np.abs(grid.points[:, 0] - 3.0)))
        lw[idx] = 0.0
        s = summarize(GridPosterior(grid=grid, log_weights=lw))
        assert s.mean[0] == pytest.approx(grid.points[idx, 0])
        assert s.covariance[0, 0] == pytest.approx(0.0, abs=1e-15)
        assert s.mode[0] == grid.points[idx, 0]

    def test_discretized_normal_moments(self):
        grid = regular_grid([0.0], [10.0], 4000)
        post = gaussian_posterior(grid, 5.0, 0.5)
        s = summarize(post)
        assert s.mean[0] == pytest.approx(5.0, abs=1e-6)
        assert s.covariance[0, 0] == pytest.approx(0.25, abs=1e-4)

    def test_mode_tie_breaks_to_lowest_index(self):
        post = uniform_posterior(regular_grid([0.0], [1.0], 8))
        s = summarize(post)
        assert s.mode[0] == post.grid.points[0, 0]


class TestLocalSummary:
    def test_full_window_equals_summarize_exactly(self):
        grid = regular_grid([0.0], [100.0], 257)
        post = gaussian_posterior(grid, 42.0, 3.0)
        s = summarize(post)
        loc, mass = local_summary(post, center=[50.0], radius=2 * grid.diameter())
        assert loc.mean[0] == s.mean[0]
        assert loc.covariance[0, 0] == s.covariance[0, 0]
        assert loc.entropy_nats == s.entropy_nats
        assert mass == pytest.approx(1.0, abs=1e-12)

    def test_bimodal_window_isolates_one_mode(self):
        grid = regular_grid([0.0], [100.0], 2000)
        th = grid.points[:, 0]
        d = 0.9 * np.exp(-0.5 * ((th - 30) / 1.5) ** 2) + 0.1 * np.exp(-0.5 * ((th - 70) / 1.5) ** 2)
        post = posterior_from_density(grid, d)
        loc, mass = local_summary(post, center=[30.0], radius=15.0)
        w = post.weights
        sel = np.abs(th - 30.0) <= 15.0
        expected_mass = w[sel].sum()
        assert mass == pytest.approx(expected_mass, rel=1e-12)
        mu = (w[sel] / w[sel].sum()) @ th[sel]
        var = (w[sel] / w[sel].sum()) @ (th[sel] - mu) ** 2
        assert loc.mean[0] == pytest.approx(mu, rel=1e-12)
        assert loc.covariance[0, 0] == pytest.approx(var, rel=1e-12)

    def test_empty_window_raises(self):
        grid = regular_grid([0.0], [100.0], 100)
        post = uniform_posterior(grid)
        with pytest.raises(EmptyWindowError):
            local_summary(post, center=[250.0], radius=1.0)

    def test_zero_mass_window_raises(self):
        grid = regular_grid([0.0], [100.0], 100)
        lw = np.full(100, -np.inf)
        lw[0] = 0.0
        post = GridPosterior(grid=grid, log_weights=lw)
        with pytest.raises(EmptyWindowError):
            local_summary(post, center=[99.0], radius=0.8)


class TestPredictive:
    def test_point_mass_returns_conditional(self):
        grid = regular_grid([0.0], [100.0], 128)
        lw = np.full(128, -np.inf)
        lw[64] = 0.0
        post = GridPosterior(grid=grid, log_weights=lw)
        model = PsychometricModel()
        p = predictive(post, model, 50.0)
        theta = grid.points[64, 0]
        expected = 1.0 / (1.0 + np.exp(-(theta - 50.0)))
        assert p[1] == pytest.approx(expected, abs=1e-14)
        assert p.sum() == pytest.approx(1.0, abs=1e-12)

    def test_uniform_two_point_average(self):
        post = uniform_posterior(two_point_grid())
        model = FixedLikelihoodModel([0.9, 0.1])
        p = predictive(post, model, 0.0)
        assert p[1] == pytest.approx(0.5, abs=1e-15)

    def test_uniform_prior_detection_rate_is_grid_mean(self):
        grid = regular_grid([0.0], [100.0], 512)
        post = uniform_posterior(grid)
        model = PsychometricModel()
        p = predictive(post, model, 50.0)
        oracle = np.mean(1.0 / (1.0 + np.exp(-(grid.points[:, 0] - 50.0))))
        assert p[1] == pytest.approx(oracle, abs=1e-12)


class TestInvariants:
    @given(seed=st.integers(0, 10_000), n_updates=st.integers(1, 30))
    @settings(max_examples=40, deadline=None)
    def test_normalization_preserved(self, seed, n_updates):
        rng = np.random.default_rng(seed)
        grid = regular_grid([0.0], [100.0], 64)
        post = uniform_posterior(grid)
        model = PsychometricModel()
        for _ in range(n_updates):
            post = bayes_update(post, model, float(rng.uniform(0, 100)),
                                float(rng.integers(2)))
            assert post.mass_check() < 1e-12

    @given(seed=st.integers(0, 10_000))
    @settings(max_examples=30, deadline=None)
    def test_order_independence(self, seed):
        rng = np.random.default_rng(seed)
        grid = regular_grid([0.0], [100.0], 64)
        model = PsychometricModel()
        xs = rng.uniform(20, 80, size=12)
        ys = rng.integers(0, 2, size=12).astype(float)
        perm = rng.permutation(12)

        a = uniform_posterior(grid)
        for x, y in zip(xs, ys):
            a = bayes_update(a, model, float(x), float(y))
        b = uniform_posterior(grid)
        for i in perm:
            b = bayes_update(b, model, float(xs[i]), float(ys[i]))
        np.testing.assert_allclose(a.weights, b.weights, atol=1e-10)

    @given(seed=st.integers(0, 10_000))
    @settings(max_examples=30, deadline=None)
    def test_entropy_bounded_by_log_volume(self, seed):
        rng = np.random.default_rng(seed)
        grid = regular_grid([0.0], [100.0], 128)
        d = rng.uniform(0.01, 1.0, size=128)
        post = posterior_from_density(grid, d)
        assert differential_entropy(post) <= np.log(100.0) + 1e-9

    def test_grid_rejects_bad_spacing(self):
        with pytest.raises(ValueError):
            ParameterGrid(points=np.array([[0.0], [1.0]]), spacing=np.array([-1.0]),
                          lower=np.array([0.0]), upper=np.array([1.0]))

    def test_posterior_rejects_nan(self):
        grid = regular_grid([0.0], [1.0], 4)
        with pytest.raises(ValueError):
            GridPosterior(grid=grid, log_weights=np.array([0.0, np.nan, 0.0, 0.0]))
