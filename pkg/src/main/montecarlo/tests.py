"""Unit tests for the Monte Carlo app.

Tests tagged ``slow`` compare simulated averages with the limiting
formulas at a few hundred to a few thousand dimensions.
"""

import numpy as np
import pandas as pd
from django.test import SimpleTestCase, tag
from scipy.stats import norm

from core.exceptions import ConfigError, SampleSizeError
from functionals.models import ShrinkageFunction
from functionals.shrinkers import lp_covariance_shrinker
from functionals.trace import m_functional, t_functional, two_resolvent_limit
from lda.classifier import theta
from lda.models import LdaModelParams
from lda.shrinkage import mean_shrinker, mean_shrinker_loss
from regression.models import RegressionModelParams
from regression.risk import gd_shrinkage, learning_curve
from spectrum.builder import build_limiting_spectrum
from spectrum.closed_form import marchenko_pastur_companion, marchenko_pastur_density, marchenko_pastur_edges
from spectrum.closed_form import marchenko_pastur_stieltjes
from spectrum.models import PopulationSpectrum

from .empirical import (
    empirical_frobenius_loss,
    empirical_lda_error,
    empirical_mean_shrinker_loss,
    empirical_regression_risk,
    empirical_stieltjes,
    empirical_trace_m,
    empirical_trace_t,
    empirical_two_resolvent_trace,
    estimate_draw_alpha2,
    kernel_estimate_fg,
    sampled_lda_error,
)
from .harness import run_replicates, summarize
from .models import CovarianceModel, ExperimentConfig
from .simulate import generate_lda_draw, generate_regression_draw, replicate_draw

IDENTITY = PopulationSpectrum.point_mass(1.0)
TWO_MASS = PopulationSpectrum(((1.0, 0.5), (4.0, 0.5)))
ZERO = ShrinkageFunction.closed("constant", c=0.0)
ONE = ShrinkageFunction.closed("constant", c=1.0)


def _config(p, n, alpha=1.0, H=IDENTITY, **extra):
    return ExperimentConfig(p=p, n=n, alpha=alpha, sigma={"kind": "atoms", "H": H.to_json()}, **extra)


class ExperimentConfigTests(SimpleTestCase):
    def test_rejects_bad_rho(self):
        with self.assertRaises(ConfigError):
            ExperimentConfig(p=10, n=20, alpha=1.0, sigma={"kind": "toeplitz_ar", "rho": 1.5})

    def test_rejects_unknown_keys(self):
        with self.assertRaises(ConfigError):
            ExperimentConfig.from_json({"p": 10, "n": 20, "alpha": 1.0, "sigma": {"kind": "atoms"}, "q": 1})

    def test_rejects_unknown_noise(self):
        with self.assertRaises(ConfigError):
            _config(10, 20, z_dist="cauchy")

    def test_atom_counts_fill_dimension(self):
        H = PopulationSpectrum.uniform([1.0, 2.0, 3.0])
        diagonal = CovarianceModel.from_atoms(H, 10).diagonal
        self.assertEqual(diagonal.size, 10)
        self.assertEqual(int(np.sum(diagonal == 1.0)), 4)

    def test_toeplitz_population(self):
        config = ExperimentConfig(p=50, n=100, alpha=1.0, sigma={"kind": "toeplitz_ar", "rho": 0.5})
        covariance = config.covariance()
        self.assertAlmostEqual(covariance.trace(), 50.0, places=10)
        np.testing.assert_allclose(covariance.eigenvalues(), config.population().locations, rtol=1e-8)

    def test_json_round_trip(self):
        config = _config(30, 60, alpha=2.0, seed=7, replicates=3)
        self.assertEqual(ExperimentConfig.from_json(config.to_json()), config)


class RegressionDrawTests(SimpleTestCase):
    def test_deterministic_replay(self):
        config = _config(40, 80, seed=11)
        first, second = generate_regression_draw(config, 2), generate_regression_draw(config, 2)
        np.testing.assert_array_equal(first.X, second.X)
        np.testing.assert_array_equal(first.y, second.y)
        self.assertFalse(np.array_equal(first.X, generate_regression_draw(config, 3).X))

    def test_svd_reconstructs_data(self):
        for p, n in ((40, 80), (80, 40)):
            draw = generate_regression_draw(_config(p, n, H=TWO_MASS))
            rebuilt = (draw.U * draw.sqrt_lambda) @ draw.Vt
            np.testing.assert_allclose(rebuilt, draw.X / np.sqrt(n), atol=1e-10)
            self.assertEqual(draw.eigenvalues.size, min(p, n))

    def test_null_signal(self):
        draw = generate_regression_draw(_config(50, 4000, alpha=0.0))
        np.testing.assert_array_equal(draw.y, draw.eps)
        self.assertAlmostEqual(float(np.var(draw.y)), 1.0, delta=0.1)

    def test_rademacher_entries(self):
        config = _config(20, 30, z_dist="rademacher")
        draw = generate_regression_draw(config)
        np.testing.assert_array_equal(np.abs(draw.X), 1.0)

    @tag("slow")
    def test_top_eigenvalue_near_edge(self):
        draw = generate_regression_draw(_config(1000, 1002))
        self.assertAlmostEqual(float(draw.eigenvalues.max()), 4.0, delta=0.2)


class EmpiricalRegressionRiskTests(SimpleTestCase):
    def test_null_estimator(self):
        covariance = CovarianceModel.from_atoms(TWO_MASS, 60)
        draw = generate_regression_draw(_config(60, 90, H=TWO_MASS), covariance=covariance)
        test_risk, train = empirical_regression_risk(draw, ZERO, covariance)
        self.assertAlmostEqual(test_risk, 1.0 + covariance.quadratic(draw.w), places=12)
        self.assertAlmostEqual(train, float(draw.y @ draw.y) / 90, places=12)

    def test_ridge_matches_direct_solve(self):
        lam = 0.3
        for p, n in ((50, 80), (80, 50)):
            config = _config(p, n, H=TWO_MASS)
            covariance = config.covariance()
            draw = generate_regression_draw(config, covariance=covariance)
            gram = draw.X @ draw.X.T / n + lam * np.eye(p)
            w_direct = np.linalg.solve(gram, draw.X @ draw.y / n)
            expected = 1.0 + covariance.quadratic(w_direct - draw.w)
            residual = draw.y - draw.X.T @ w_direct
            test_risk, train = empirical_regression_risk(draw, ShrinkageFunction.closed("ridge", lam=lam), covariance)
            self.assertAlmostEqual(test_risk, expected, delta=1e-8)
            self.assertAlmostEqual(train, float(residual @ residual) / n, delta=1e-8)

    def test_long_gradient_flow_is_ridge(self):
        config = _config(40, 80)
        covariance = config.covariance()
        draw = generate_regression_draw(config, covariance=covariance)
        ridge = empirical_regression_risk(draw, ShrinkageFunction.closed("ridge", lam=0.5), covariance)
        flow = empirical_regression_risk(draw, gd_shrinkage(1e4, 0.5), covariance)
        np.testing.assert_allclose(flow, ridge, rtol=1e-10)

    @tag("slow")
    def test_learning_curve_matches_simulation(self):
        config = _config(500, 1500, alpha=1.0, H=TWO_MASS, seed=2024, replicates=50)
        times = np.geomspace(1e-2, 1e2, 20)
        shrinkers = {float(t): gd_shrinkage(t, 1 / 3) for t in times}
        frame = run_replicates(config, "regression", shrinkers, key="t")
        summary = summarize(frame, "t", "test_risk")
        params = RegressionModelParams(1.0, config.gamma, TWO_MASS)
        spec = build_limiting_spectrum(TWO_MASS, config.gamma)
        predicted = learning_curve(params, spec, 1 / 3, times).test_risk
        # 1e-2 absorbs the O(1/p) bias of the finite-dimensional risk
        gap = np.abs(predicted - summary["test_risk_mean"].to_numpy())
        self.assertTrue(np.all(gap < 3 * summary["test_risk_se"].to_numpy() + 1e-2), gap)

    @tag("slow")
    def test_toeplitz_learning_curve_matches_simulation(self):
        config = ExperimentConfig(
            p=1000, n=1500, alpha=2.0, sigma={"kind": "toeplitz_ar", "rho": 0.5}, seed=77, replicates=20
        )
        times = np.geomspace(1e-1, 1e2, 10)
        shrinkers = {float(t): gd_shrinkage(t, 0.0) for t in times}
        frame = run_replicates(config, "regression", shrinkers, key="t")
        summary = summarize(frame, "t", "test_risk")
        H = config.population()
        params = RegressionModelParams(2.0, config.gamma, H)
        predicted = learning_curve(params, build_limiting_spectrum(H, config.gamma), 0.0, times).test_risk
        gap = np.abs(predicted - summary["test_risk_mean"].to_numpy())
        self.assertTrue(np.all(gap < 3 * summary["test_risk_se"].to_numpy() + 2e-2), gap)


class TraceTests(SimpleTestCase):
    def test_stieltjes_matches_closed_form(self):
        z = 1.0 + 1.0j
        for p, n in ((400, 800), (800, 400)):
            config = _config(p, n)
            draw = generate_regression_draw(config)
            expected = complex(marchenko_pastur_stieltjes(z, p / n))
            self.assertLess(abs(empirical_stieltjes(draw, z) - expected), 2e-2)

    def test_trace_m_identity_population(self):
        config = _config(400, 800)
        covariance = config.covariance()
        draw = generate_regression_draw(config, covariance=covariance)
        spec = build_limiting_spectrum(IDENTITY, 0.5, 64)
        h = ShrinkageFunction.closed("ridge_inverse", lam=1.0)
        self.assertAlmostEqual(empirical_trace_m(draw, h, covariance), m_functional(spec, h).value, delta=2e-2)

    def test_two_resolvent_identity_population(self):
        config = _config(400, 800)
        covariance = config.covariance()
        draw = generate_regression_draw(config, covariance=covariance)
        spec = build_limiting_spectrum(IDENTITY, 0.5, 64)
        z1, z2 = 1.0 + 1.0j, 2.0 + 0.5j
        expected = two_resolvent_limit(spec, z1, z2)
        observed = empirical_two_resolvent_trace(draw, z1, z2, covariance)
        self.assertLess(abs(observed - expected), 3e-2 * abs(expected))

    @tag("slow")
    def test_two_resolvent_two_mass_population(self):
        config = _config(400, 800, H=TWO_MASS, seed=41)
        covariance = config.covariance()
        spec = build_limiting_spectrum(TWO_MASS, 0.5)
        z1, z2 = 1.0 + 1.0j, 2.0 + 0.5j
        expected = two_resolvent_limit(spec, z1, z2)
        observed = np.array(
            [empirical_two_resolvent_trace(replicate_draw(config, r, covariance=covariance), z1, z2, covariance)
             for r in range(10)]
        )
        for part in (np.real, np.imag):
            values = part(observed)
            se = values.std(ddof=1) / np.sqrt(values.size)
            self.assertLess(abs(values.mean() - part(expected)), 3 * se + 1e-2 * abs(expected))

    @tag("slow")
    def test_trace_functionals_two_mass_population(self):
        shrinkers = (
            ShrinkageFunction.closed("ridge_inverse", lam=1.0),
            ShrinkageFunction.closed("identity"),
            ShrinkageFunction.closed("exponential", rate=1.0),
        )
        for gamma, n in ((1 / 3, 1200), (2.0, 200)):
            config = _config(400, n, H=TWO_MASS, seed=43)
            covariance = config.covariance()
            spec = build_limiting_spectrum(TWO_MASS, gamma)
            draws = [replicate_draw(config, r, covariance=covariance) for r in range(10)]
            for h in shrinkers:
                for empirical, limit in ((empirical_trace_m, m_functional), (empirical_trace_t, t_functional)):
                    with self.subTest(gamma=gamma, h=h.family, functional=limit.__name__):
                        values = np.array([empirical(draw, h, covariance) for draw in draws])
                        se = values.std(ddof=1) / np.sqrt(values.size)
                        expected = limit(spec, h).value
                        # finite-p bias is O(1/p) relative to the value
                        self.assertLess(abs(values.mean() - expected), 3 * se + 1e-2 * abs(expected))


class FrobeniusLossTests(SimpleTestCase):
    def test_identity_population_constant_one(self):
        config = _config(60, 120)
        covariance = config.covariance()
        draw = generate_regression_draw(config, covariance=covariance)
        self.assertEqual(empirical_frobenius_loss(draw, ONE, covariance), 0.0)

    def test_null_estimator(self):
        config = _config(200, 300, H=TWO_MASS)
        covariance = config.covariance()
        draw = generate_regression_draw(config, covariance=covariance)
        self.assertAlmostEqual(empirical_frobenius_loss(draw, ZERO, covariance), 8.5, places=10)

    def test_nonlinear_shrinker_beats_sample_covariance(self):
        config = _config(400, 800, H=TWO_MASS)
        covariance = config.covariance()
        draw = generate_regression_draw(config, covariance=covariance)
        shrinker = lp_covariance_shrinker(build_limiting_spectrum(TWO_MASS, 0.5))
        sample = ShrinkageFunction.closed("identity")
        self.assertLess(
            empirical_frobenius_loss(draw, shrinker, covariance),
            empirical_frobenius_loss(draw, sample, covariance),
        )


class LdaDrawTests(SimpleTestCase):
    def test_odd_sample_count(self):
        with self.assertRaises(ConfigError):
            generate_lda_draw(_config(20, 41))

    def test_requires_gaussian_classes(self):
        with self.assertRaises(ConfigError):
            generate_lda_draw(_config(20, 40, z_dist="rademacher"))

    def test_mean_difference(self):
        draw = generate_lda_draw(_config(30, 60, H=TWO_MASS))
        halves = draw.X[:, :30].mean(axis=1) - draw.X[:, 30:].mean(axis=1)
        np.testing.assert_allclose(draw.delta_hat, halves / 2, atol=1e-12)

    def test_null_directions_dropped(self):
        draw = generate_lda_draw(_config(120, 40))
        self.assertEqual(draw.eigenvalues.size, 38)
        self.assertEqual(draw.null_dimension, 82)
        self.assertAlmostEqual(draw.sample_trace, float(draw.eigenvalues.sum()), places=8)

    def test_identity_rule_baseline(self):
        config = _config(50, 100, alpha=2.0, H=TWO_MASS)
        covariance = config.covariance()
        draw = generate_lda_draw(config, covariance=covariance)
        error, degenerate = empirical_lda_error(draw, ONE, covariance)
        expected = norm.cdf(-(draw.delta_hat @ draw.delta) / np.sqrt(covariance.quadratic(draw.delta_hat)))
        self.assertFalse(degenerate)
        self.assertAlmostEqual(error, float(expected), places=12)

    def test_zero_rule_is_degenerate(self):
        config = _config(20, 40)
        covariance = config.covariance()
        draw = generate_lda_draw(config, covariance=covariance)
        self.assertEqual(empirical_lda_error(draw, ZERO, covariance), (0.5, True))

    def test_strong_signal(self):
        config = _config(100, 200, alpha=8.0, H=TWO_MASS)
        covariance = config.covariance()
        draw = generate_lda_draw(config, covariance=covariance)
        for h in (ONE, ShrinkageFunction.closed("ridge_inverse", lam=1.0)):
            self.assertLess(empirical_lda_error(draw, h, covariance)[0], 1e-3)

    def test_sampled_error_needs_test_points(self):
        config = _config(20, 40)
        draw = generate_lda_draw(config)
        with self.assertRaises(ConfigError):
            sampled_lda_error(draw, ONE, config.covariance(), 1, np.random.default_rng(0))

    @tag("slow")
    def test_sampled_error_matches_conditional(self):
        config = _config(100, 200, alpha=1.5, H=TWO_MASS, seed=5)
        covariance = config.covariance()
        draw = generate_lda_draw(config, covariance=covariance)
        h = ShrinkageFunction.closed("ridge_inverse", lam=1.0)
        conditional, _ = empirical_lda_error(draw, h, covariance)
        sampled = sampled_lda_error(draw, h, covariance, 100_000, np.random.default_rng(9))
        se = np.sqrt(conditional * (1 - conditional) / 100_000)
        self.assertLess(abs(sampled - conditional), 3 * se)

    @tag("slow")
    def test_conditional_error_matches_limit(self):
        h = ShrinkageFunction.closed("ridge_inverse", lam=1.0)
        for H in (TWO_MASS, PopulationSpectrum.uniform(range(1, 6))):
            spec = build_limiting_spectrum(H, 0.5)
            for alpha in np.linspace(0.5, 4.0, 8):
                with self.subTest(H=H.locations.tolist(), alpha=alpha):
                    config = _config(1000, 2000, alpha=float(alpha), H=H, seed=17, replicates=10)
                    frame = run_replicates(config, "lda", {"ridge_inverse": h})
                    summary = summarize(frame, "shrinker", "lda_error").iloc[0]
                    limit = theta(LdaModelParams(float(alpha), 0.5, H), spec, h).error
                    self.assertLess(abs(summary["lda_error_mean"] - limit), 5e-3 + 3 * summary["lda_error_se"])

    @tag("slow")
    def test_alpha2_estimate_consistent(self):
        for alpha in (0.0, 1.0, 2.0):
            config = _config(200, 400, alpha=alpha, H=TWO_MASS, seed=3)
            covariance = config.covariance()
            raw = np.array(
                [estimate_draw_alpha2(replicate_draw(config, r, "lda", covariance)).raw for r in range(50)]
            )
            se = raw.std(ddof=1) / np.sqrt(raw.size)
            self.assertLess(abs(raw.mean() - alpha * alpha), 3 * se)


class MeanShrinkerLossTests(SimpleTestCase):
    def test_identity_rule_is_plain_mean_difference(self):
        draw = generate_lda_draw(_config(30, 60, H=TWO_MASS))
        miss = draw.delta_hat - draw.delta
        self.assertAlmostEqual(empirical_mean_shrinker_loss(draw, ONE), float(miss @ miss), places=12)

    def test_zero_rule_loses_the_whole_mean(self):
        draw = generate_lda_draw(_config(30, 60))
        self.assertAlmostEqual(empirical_mean_shrinker_loss(draw, ZERO), float(draw.delta @ draw.delta), places=12)

    @tag("slow")
    def test_shrunk_mean_matches_limit_and_beats_raw_mean(self):
        params = LdaModelParams(1.0, 0.5, IDENTITY)
        spec = build_limiting_spectrum(IDENTITY, 0.5)
        r = mean_shrinker(params, spec)
        config = _config(1000, 2000, alpha=1.0, seed=29, replicates=30)
        frame = run_replicates(config, "lda", {"shrunk": r, "raw": ONE})
        loss = frame.pivot(index="replicate", columns="shrinker", values="mean_loss")
        gain = loss["raw"] - loss["shrunk"]
        self.assertGreater(gain.mean(), 3 * gain.std(ddof=1) / np.sqrt(gain.size))
        se = loss["shrunk"].std(ddof=1) / np.sqrt(len(loss))
        limit = mean_shrinker_loss(params, spec, r)
        self.assertLess(abs(loss["shrunk"].mean() - limit), 3 * se + 5e-3)


class KernelEstimateTests(SimpleTestCase):
    def test_too_few_eigenvalues(self):
        with self.assertRaises(SampleSizeError):
            kernel_estimate_fg(np.linspace(1.0, 2.0, 99), 0.5)

    def test_bandwidth_must_be_positive(self):
        with self.assertRaises(ConfigError):
            kernel_estimate_fg(np.linspace(1.0, 2.0, 200), 0.5, bandwidth=0.0)

    def test_uniform_sample(self):
        # density 1 on [1, 2]; its Hilbert transform is log((2 - x) / (x - 1))
        gamma = 0.5
        x = np.linspace(1.2, 1.8, 13)
        estimate = kernel_estimate_fg(np.linspace(1.0, 2.0, 2001), gamma, bandwidth=0.02, x=x)
        np.testing.assert_allclose(estimate.g_hat, gamma * np.pi, atol=2e-2)
        expected_f = gamma * np.log((2.0 - x) / (x - 1.0)) - (1.0 - gamma) / x
        np.testing.assert_allclose(estimate.f_hat, expected_f, atol=2e-2)
        self.assertTrue(np.all(estimate.g_hat >= 0))

    def test_default_grid_and_frame(self):
        estimate = kernel_estimate_fg(np.linspace(1.0, 2.0, 500), 0.5)
        self.assertGreater(estimate.bandwidth, 0)
        self.assertEqual(list(estimate.to_frame().columns), ["x", "f_hat", "g_hat"])

    @tag("slow")
    def test_identity_population_oracle(self):
        gamma = 0.5
        draw = generate_regression_draw(_config(3000, 6000, seed=1))
        a, b = marchenko_pastur_edges(gamma)
        x = np.linspace(a + 0.1 * (b - a), b - 0.1 * (b - a), 200)
        estimate = kernel_estimate_fg(draw.eigenvalues, gamma, x=x)
        expected_g = gamma * np.pi * marchenko_pastur_density(x, gamma)
        self.assertLess(float(np.max(np.abs(estimate.g_hat - expected_g))), 5e-2)
        modulus = x * (estimate.f_hat**2 + estimate.g_hat**2)
        np.testing.assert_allclose(modulus, 1.0, atol=0.1)
        expected_f = marchenko_pastur_companion(x + 1e-9j, gamma).real
        self.assertLess(float(np.max(np.abs(estimate.f_hat - expected_f))), 0.1)


class HarnessTests(SimpleTestCase):
    def test_unknown_task(self):
        with self.assertRaises(ConfigError):
            run_replicates(_config(10, 20), "clustering", {"zero": ZERO})

    def test_independent_of_thread_count(self):
        config = _config(20, 40, H=TWO_MASS, seed=4, replicates=4)
        shrinkers = {"zero": ZERO, "ridge": ShrinkageFunction.closed("ridge", lam=1.0)}
        single = run_replicates(config, "regression", shrinkers, threads=1, frobenius=True)
        pooled = run_replicates(config, "regression", shrinkers, threads=3, frobenius=True)
        pd.testing.assert_frame_equal(single, pooled)
        self.assertEqual(single["replicate"].tolist(), [0, 0, 1, 1, 2, 2, 3, 3])
        self.assertEqual(
            list(single.columns), ["replicate", "shrinker", "test_risk", "train_error", "frobenius_loss"]
        )

    def test_lda_columns(self):
        config = _config(20, 40, replicates=2)
        frame = run_replicates(config, "lda", {"one": ONE})
        self.assertEqual(
            list(frame.columns),
            ["replicate", "shrinker", "lda_error", "degenerate", "mean_loss", "alpha2_hat", "alpha2_raw"],
        )

    def test_summarize(self):
        frame = pd.DataFrame({"group": ["a", "b", "a"], "value": [1.0, 2.0, 3.0]})
        summary = summarize(frame, "group", "value")
        self.assertEqual(summary["group"].tolist(), ["a", "b"])
        self.assertEqual(summary["value_mean"].tolist(), [2.0, 2.0])
        self.assertAlmostEqual(summary["value_se"].iloc[0], 1.0, places=12)
        self.assertTrue(np.isnan(summary["value_se"].iloc[1]))
        self.assertEqual(summary["count"].tolist(), [2, 1])

    def test_summarize_missing_column(self):
        with self.assertRaises(ConfigError):
            summarize(pd.DataFrame({"a": [1.0]}), "a", "b")
