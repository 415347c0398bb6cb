"""
Tests for the Minnesota-prior BVAR: prior layout, closed-form posterior,
marginal likelihood, draws, grid search and DIC.
"""

import sys
import unittest
from pathlib import Path

import numpy as np
from scipy import stats

# Add the src directory to the Python path
src_path = str(Path(__file__).parent.parent / 'src')
if src_path not in sys.path:
    sys.path.insert(0, src_path)

from common.exceptions import BvarError
from data_ingestion.panel import TimeSeriesPanel, specs_from_names
from models.estimation.bvar import (
    CoefficientDraws,
    MinnesotaHyper,
    build_minnesota_prior,
    compare_lags,
    dic,
    dic_components,
    draw_posterior,
    estimate_sigma,
    fit_posterior,
    grid_search_hyper,
    hyper_grid,
    posterior,
    var_design,
)


def simulate_var(lags, intercept, sigma, n_obs, rng, burn=200):
    """Simulate a Gaussian VAR from (P, M, M) lag matrices."""
    lags = np.asarray(lags, dtype=float)
    P, M, _ = lags.shape
    chol = np.linalg.cholesky(np.asarray(sigma, dtype=float))
    y = np.zeros((n_obs + burn, M))
    for t in range(P, n_obs + burn):
        y[t] = intercept + chol @ rng.standard_normal(M)
        for p in range(P):
            y[t] += lags[p] @ y[t - p - 1]
    return y[burn:]


def make_panel(values, names=None):
    values = np.asarray(values, dtype=float)
    names = names or [f"v{j}" for j in range(values.shape[1])]
    return TimeSeriesPanel((1980, 1), values, specs_from_names(names))


class TestMinnesotaPrior(unittest.TestCase):

    def test_dimensions(self):
        rng = np.random.default_rng(0)
        cases = [(8, 12, 776), (18, 3, 990)]
        for M, P, expected in cases:
            with self.subTest(M=M, P=P):
                panel = make_panel(rng.standard_normal((60, M)))
                prior = build_minnesota_prior(MinnesotaHyper(lags=P), panel, scales=np.ones(M))
                self.assertEqual(prior.mean.size, expected)
                self.assertEqual(prior.variance.size, expected)

    def test_standard_deviations(self):
        M, P = 3, 2
        panel = make_panel(np.random.default_rng(1).standard_normal((40, M)))
        hyper = MinnesotaHyper(b_ar=0.9, lambda1=0.3, lambda2=0.5, lambda3=1.5, lambda4=100.0, lags=P)
        prior = build_minnesota_prior(hyper, panel, scales=np.ones(M))
        K = M * P + 1
        std = prior.std.reshape(M, K)
        mean = prior.mean.reshape(M, K)
        self.assertAlmostEqual(std[0, 0], 0.3)
        # equation 0, lag 2 of variable 1
        self.assertAlmostEqual(std[0, M + 1], 0.3 * 0.5 / 2 ** 1.5, places=12)
        self.assertAlmostEqual(std[0, M + 1], 0.05303, places=5)
        self.assertAlmostEqual(std[1, M * P], 30.0)
        np.testing.assert_array_equal(np.diag(mean[:, :M]), 0.9)
        self.assertEqual(np.count_nonzero(mean), M)

    def test_cross_lag_uses_scale_ratio(self):
        panel = make_panel(np.random.default_rng(2).standard_normal((40, 2)))
        hyper = MinnesotaHyper(lambda1=0.2, lambda2=0.5, lags=1)
        prior = build_minnesota_prior(hyper, panel, scales=np.array([1.0, 4.0]))
        std = prior.std.reshape(2, 3)
        self.assertAlmostEqual(std[0, 1], 0.2 * 0.5 * 1.0 / 4.0)
        self.assertAlmostEqual(std[1, 0], 0.2 * 0.5 * 4.0 / 1.0)

    def test_zero_scale_rejected(self):
        panel = make_panel(np.random.default_rng(3).standard_normal((40, 2)))
        with self.assertRaisesRegex(BvarError, "v1"):
            build_minnesota_prior(MinnesotaHyper(lags=1), panel, scales=np.array([1.0, 0.0]))

    def test_constant_series_has_zero_scale(self):
        noise = np.random.default_rng(4).standard_normal(40)
        for level in (3.0, 0.1, 412.7):
            values = np.column_stack([noise, np.full(40, level)])
            with self.subTest(level=level):
                with self.assertRaisesRegex(BvarError, "v1"):
                    build_minnesota_prior(MinnesotaHyper(lags=1), make_panel(values))

    def test_small_but_genuine_scale_accepted(self):
        rng = np.random.default_rng(5)
        values = np.column_stack([rng.standard_normal(40), 1e-3 * rng.standard_normal(40)])
        prior = build_minnesota_prior(MinnesotaHyper(lags=1), make_panel(values))
        self.assertTrue(np.all(np.isfinite(prior.std)))
        self.assertLess(prior.scales[1], 1e-2)

    def test_invalid_hyperparameters(self):
        for kwargs in ({"b_ar": 1.5}, {"lambda1": 0.0}, {"lambda3": -1.0}, {"lags": 0}):
            with self.subTest(**kwargs):
                with self.assertRaises(ValueError):
                    MinnesotaHyper(**kwargs)


class TestPosterior(unittest.TestCase):

    def setUp(self):
        self.rng = np.random.default_rng(10)
        self.phi = np.array([[[0.5, 0.1], [0.0, 0.3]]])
        self.sigma = np.array([[1.0, 0.3], [0.3, 2.0]])
        self.values = simulate_var(self.phi, np.array([1.0, -0.5]), self.sigma, 500, self.rng)
        self.panel = make_panel(self.values)

    def test_univariate_closed_form(self):
        y = simulate_var([[[0.7]]], np.array([0.2]), [[0.5]], 60, self.rng)
        panel = make_panel(y)
        hyper = MinnesotaHyper(b_ar=0.9, lambda1=0.4, lags=1)
        prior = build_minnesota_prior(hyper, panel)
        s2 = 0.5
        post = posterior(prior, panel, np.array([[s2]]))

        design = var_design(y, 1)
        X, yy = design.X, design.Y[:, 0]
        V = np.diag(prior.variance)
        precision = X.T @ X / s2 + np.linalg.inv(V)
        expected_mean = np.linalg.solve(precision, np.linalg.solve(V, prior.mean) + X.T @ yy / s2)
        np.testing.assert_allclose(post.beta_mean, expected_mean, rtol=1e-9)
        np.testing.assert_allclose(post.beta_cov, np.linalg.inv(precision), rtol=1e-8)

        oracle = stats.multivariate_normal(X @ prior.mean, s2 * np.eye(len(yy)) + X @ V @ X.T).logpdf(yy)
        self.assertAlmostEqual(post.log_marginal, oracle, delta=1e-7 * abs(oracle))

    def test_bivariate_marginal_likelihood_oracle(self):
        panel = make_panel(self.values[:33])
        hyper = MinnesotaHyper(lambda1=0.5, lags=1)
        prior = build_minnesota_prior(hyper, panel)
        post = posterior(prior, panel, self.sigma)

        design = var_design(panel.values, 1)
        n = design.n_obs
        Z = np.kron(np.eye(2), design.X)
        cov = np.kron(self.sigma, np.eye(n)) + Z @ np.diag(prior.variance) @ Z.T
        oracle = stats.multivariate_normal(Z @ prior.mean, cov).logpdf(design.Y.ravel(order="F"))
        self.assertAlmostEqual(post.log_marginal, oracle, delta=1e-7 * abs(oracle))

    def test_tight_prior_returns_prior_mean(self):
        hyper = MinnesotaHyper(b_ar=0.9, lambda1=1e-8, lags=1)
        post = fit_posterior(self.panel, hyper)
        prior = build_minnesota_prior(hyper, self.panel)
        np.testing.assert_allclose(post.beta_mean, prior.mean, atol=1e-6)

    def test_loose_prior_returns_ols(self):
        post = fit_posterior(self.panel, MinnesotaHyper(lambda1=1e8, lags=1))
        design = var_design(self.values, 1)
        ols, *_ = np.linalg.lstsq(design.X, design.Y, rcond=None)
        np.testing.assert_allclose(post.beta_mean, ols.T.ravel(), atol=1e-6)

    def test_recovers_generating_coefficients(self):
        post = fit_posterior(self.panel, MinnesotaHyper(b_ar=0.5, lambda1=1.0, lags=1))
        sd = np.sqrt(np.diag(post.beta_cov))
        K = 3
        for i in range(2):
            for j in range(2):
                k = i * K + j
                with self.subTest(equation=i, regressor=j):
                    self.assertLess(abs(post.beta_mean[k] - self.phi[0, i, j]), 4.0 * sd[k])

    def test_mismatched_covariance(self):
        prior = build_minnesota_prior(MinnesotaHyper(lags=1), self.panel)
        with self.assertRaises(BvarError):
            posterior(prior, self.panel, np.eye(3))


class TestDraws(unittest.TestCase):

    def setUp(self):
        rng = np.random.default_rng(20)
        values = simulate_var([[[0.6, 0.0], [0.2, 0.4]]], np.zeros(2), np.eye(2), 200, rng)
        self.post = fit_posterior(make_panel(values, ["CO2", "SIE"]), MinnesotaHyper(lags=1))

    def test_same_seed_is_bitwise_identical(self):
        a = draw_posterior(self.post, 50, seed=3)
        b = draw_posterior(self.post, 50, seed=3)
        np.testing.assert_array_equal(a.beta, b.beta)
        c = draw_posterior(self.post, 50, seed=4)
        self.assertFalse(np.array_equal(a.beta, c.beta))

    def test_draw_moments(self):
        N = 20000
        draws = draw_posterior(self.post, N, seed=5)
        sd = np.sqrt(np.diag(self.post.beta_cov))
        np.testing.assert_array_less(np.abs(draws.beta.mean(axis=0) - self.post.beta_mean), 5.0 * sd / np.sqrt(N))
        np.testing.assert_allclose(draws.beta.var(axis=0), sd ** 2, rtol=0.05)

    def test_reshaping_and_labels(self):
        draws = draw_posterior(self.post, 4, seed=1)
        self.assertEqual(draws.lag_matrices.shape, (4, 1, 2, 2))
        self.assertEqual(draws.intercepts.shape, (4, 2))
        self.assertIsNone(draws.trend_coefficients)
        self.assertEqual(draws.spectral_radius.shape, (4,))
        frame = draws.to_frame()
        self.assertEqual(
            frame.columns.tolist(),
            ["draw", "CO2:CO2(-1)", "CO2:SIE(-1)", "CO2:const", "SIE:CO2(-1)", "SIE:SIE(-1)", "SIE:const"],
        )
        restored = CoefficientDraws.from_frame(frame, ["CO2", "SIE"], 1)
        np.testing.assert_array_equal(restored.beta, draws.beta)

    def test_from_matrices_layout(self):
        phi = np.array([[[0.5, 0.1], [0.2, 0.3]], [[0.05, 0.0], [0.0, 0.1]]])
        draws = CoefficientDraws.from_matrices([1.0, 2.0], phi, trend=[0.01, 0.02], names=["a", "b"])
        self.assertEqual(draws.n_regressors, 6)
        np.testing.assert_array_equal(draws.lag_matrices[0], phi)
        np.testing.assert_array_equal(draws.intercepts[0], [1.0, 2.0])
        np.testing.assert_array_equal(draws.trend_coefficients[0], [0.01, 0.02])
        # equation a: a(-1), b(-1), a(-2), b(-2), const, trend
        np.testing.assert_array_equal(draws.beta[0, :6], [0.5, 0.1, 0.05, 0.0, 1.0, 0.01])

    def test_explosive_flag(self):
        draws = CoefficientDraws.from_matrices(np.zeros((2, 1)), np.array([[[[0.5]]], [[[1.2]]]]))
        np.testing.assert_array_equal(draws.explosive, [False, True])

    def test_wrong_length_rejected(self):
        with self.assertRaises(BvarError):
            CoefficientDraws(np.zeros((1, 5)), 2, 1)


class TestResidualCovariance(unittest.TestCase):

    def test_white_noise(self):
        sigma = np.array([[1.0, 0.3], [0.3, 2.0]])
        rng = np.random.default_rng(30)
        values = rng.standard_normal((1000, 2)) @ np.linalg.cholesky(sigma).T
        est = estimate_sigma(make_panel(values), lags=1)
        np.testing.assert_allclose(est, sigma, atol=4.0 * 2.0 / np.sqrt(1000))
        np.testing.assert_allclose(est, est.T)

    def test_deterministic_sinusoid(self):
        x = np.sin(2.0 * np.pi * np.arange(240) / 12.0)
        est = estimate_sigma(make_panel(x[:, None]), lags=2)
        self.assertLess(abs(est[0, 0]), 1e-8)

    def test_infeasible_design(self):
        values = np.random.default_rng(31).standard_normal((10, 2))
        with self.assertRaisesRegex(BvarError, "infeasible"):
            estimate_sigma(make_panel(values), lags=6)

    def test_trend_regressor(self):
        design = var_design(np.ones((10, 2)), lags=2, trend=True)
        self.assertEqual(design.X.shape, (8, 6))
        np.testing.assert_array_equal(design.X[:, -1], np.arange(2, 10))
        np.testing.assert_array_equal(design.X[:, -2], 1.0)


class TestGridSearch(unittest.TestCase):

    def test_grid_product(self):
        grid = hyper_grid(b_ar=[0.5, 0.9], lambda1=[0.1, 0.2, 0.3], lambda2=[0.5], lambda3=[1.0], lambda4=[100.0], lags=[1])
        self.assertEqual(len(grid), 6)

    def test_singleton_grid(self):
        values = simulate_var([[[0.5]]], np.zeros(1), [[1.0]], 100, np.random.default_rng(40))
        hyper = MinnesotaHyper(lags=1)
        best, table = grid_search_hyper([hyper], make_panel(values))
        self.assertEqual(best, hyper)
        self.assertEqual(len(table), 1)
        self.assertTrue(np.isfinite(table["log_marginal"].iloc[0]))

    def test_empty_grid(self):
        with self.assertRaises(ValueError):
            grid_search_hyper([], make_panel(np.ones((10, 1))))

    def test_selects_persistence_of_generating_process(self):
        grid = hyper_grid(b_ar=[0.2, 0.9], lambda1=[0.05], lambda2=[0.5], lambda3=[1.0], lambda4=[100.0], lags=[1])
        hits = 0
        for seed in range(10):
            values = simulate_var([[[0.9]]], np.zeros(1), [[1.0]], 300, np.random.default_rng(seed))
            best, _ = grid_search_hyper(grid, make_panel(values), max_workers=2)
            hits += best.b_ar == 0.9
        self.assertGreaterEqual(hits, 6)


class TestDic(unittest.TestCase):

    def setUp(self):
        self.rng = np.random.default_rng(50)

    def test_single_draw_has_no_effective_parameters(self):
        values = simulate_var([[[0.5]]], np.zeros(1), [[1.0]], 100, self.rng)
        panel = make_panel(values)
        post = fit_posterior(panel, MinnesotaHyper(lags=1))
        parts = dic_components(post.mean_draws(), panel, post.sigma_u)
        self.assertEqual(parts["p_d"], 0.0)
        self.assertEqual(parts["dic"], parts["mean_deviance"])

    def test_deviance_matches_gaussian_loglik(self):
        values = simulate_var([[[0.5]]], np.zeros(1), [[1.0]], 80, self.rng)
        panel = make_panel(values)
        post = fit_posterior(panel, MinnesotaHyper(lags=1))
        design = var_design(values, 1)
        resid = design.Y[:, 0] - design.X @ post.beta_mean
        expected = -2.0 * stats.norm(0.0, np.sqrt(post.sigma_u[0, 0])).logpdf(resid).sum()
        self.assertAlmostEqual(dic(post.mean_draws(), panel, post.sigma_u), expected, places=6)

    def test_short_lag_preferred_for_var1_data(self):
        hyper = MinnesotaHyper(lambda1=0.5, lags=1)
        wins = 0
        for seed in range(5):
            rng = np.random.default_rng(seed)
            values = simulate_var([[[0.5, 0.1], [0.0, 0.4]]], np.zeros(2), np.eye(2), 300, rng)
            table = compare_lags(make_panel(values), [(1, False), (12, False)], hyper, n_draws=500, seed=seed)
            wins += table["dic"].iloc[0] < table["dic"].iloc[1]
        self.assertGreaterEqual(wins, 3)

    def test_comparison_table(self):
        values = simulate_var([[[0.5]]], np.zeros(1), [[1.0]], 120, self.rng)
        table = compare_lags(make_panel(values), [(1, False), (2, True)], MinnesotaHyper(lags=1), n_draws=100, seed=1)
        self.assertEqual(table.columns.tolist(), ["lags", "trend", "mean_deviance", "deviance_at_mean", "p_d", "dic"])
        self.assertEqual(table["lags"].tolist(), [1, 2])
        self.assertTrue((table["p_d"] > 0).all())


if __name__ == '__main__':
    unittest.main()
