"""Unit tests for the Regression app."""

import numpy as np
from django.test import SimpleTestCase

from core.exceptions import ConfigError, PreconditionError
from functionals.models import ShrinkageFunction
from functionals.shrinkers import lp_covariance_shrinker, precision_from_covariance
from spectrum.builder import build_limiting_spectrum
from spectrum.models import PopulationSpectrum

from .models import LearningCurve, RegressionModelParams
from .risk import (
    check_overregularized_monotone,
    closed_form_identity_curve,
    early_stopping_comparison,
    final_train_error,
    gd_shrinkage,
    learning_curve,
    optimal_stopping_time,
    predicted_test_risk,
    ridge_shrinkage,
    risk_surface,
    train_error,
    training_error,
)

IDENTITY = PopulationSpectrum.point_mass(1.0)
TWO_MASS = PopulationSpectrum(((1.0, 0.5), (4.0, 0.5)))
ZERO = ShrinkageFunction.closed("constant", c=0.0)


class ParamsTests(SimpleTestCase):
    def test_negative_alpha(self):
        with self.assertRaises(ConfigError):
            RegressionModelParams(-1.0, 0.5, IDENTITY)

    def test_optimal_lambda(self):
        self.assertEqual(RegressionModelParams(0.5, 0.5, IDENTITY).optimal_lambda, 2.0)
        self.assertEqual(RegressionModelParams(0.0, 0.5, IDENTITY).optimal_lambda, float("inf"))

    def test_curve_requires_increasing_times(self):
        with self.assertRaises(ConfigError):
            LearningCurve(0.0, [1.0, 0.5], [1.0, 1.0], [1.0, 1.0])


class GdShrinkageTests(SimpleTestCase):
    def test_untrained(self):
        np.testing.assert_array_equal(gd_shrinkage(0.0, 0.5)(np.array([0.5, 1.0, 2.0])), 0.0)

    def test_long_time_limit_is_ridge(self):
        self.assertAlmostEqual(gd_shrinkage(1e6, 1 / 3)(1.0), 0.75, places=6)

    def test_unregularized(self):
        self.assertAlmostEqual(gd_shrinkage(1.0, 0.0)(1.0), 0.6321205588, places=9)


class PredictedRiskTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.identity = build_limiting_spectrum(IDENTITY, 0.5)
        cls.identity_over = build_limiting_spectrum(IDENTITY, 2.0)
        cls.two_mass = build_limiting_spectrum(TWO_MASS, 1 / 3)
        cls.two_mass_over = build_limiting_spectrum(TWO_MASS, 2.0)

    def test_null_estimator(self):
        params = RegressionModelParams(0.5, 0.5, IDENTITY)
        self.assertAlmostEqual(predicted_test_risk(params, self.identity, ZERO).test_risk, 1.25, delta=1e-4)
        params = RegressionModelParams(1.0, 2.0, TWO_MASS)
        self.assertAlmostEqual(predicted_test_risk(params, self.two_mass_over, ZERO).test_risk, 3.5, delta=1e-4)

    def test_decomposition(self):
        params = RegressionModelParams(1.0, 2.0, TWO_MASS)
        report = predicted_test_risk(params, self.two_mass_over, ShrinkageFunction.closed("ridge", lam=0.5))
        total = 1.0 + report.bias_integral + report.variance_integral + report.atom_term
        self.assertAlmostEqual(report.test_risk, total, delta=1e-12)
        self.assertGreater(report.atom_term, 0)
        self.assertGreaterEqual(report.test_risk, 1.0)

    def test_spectrum_mismatch(self):
        params = RegressionModelParams(1.0, 0.5, TWO_MASS)
        with self.assertRaises(ConfigError):
            predicted_test_risk(params, self.identity, ZERO)

    def test_optimal_ridge_beats_other_shrinkers(self):
        params = RegressionModelParams(1.0, 1 / 3, TWO_MASS)
        best = predicted_test_risk(params, self.two_mass, ridge_shrinkage(params.optimal_lambda)).test_risk
        menu = [ridge_shrinkage(lam) for lam in (0.01, 0.1, 0.2, 0.5, 1.0, 5.0)]
        menu += [gd_shrinkage(t, lam) for t in (0.5, 2.0, 10.0) for lam in (0.0, 0.1, 1.0)]
        for h in menu:
            risk = predicted_test_risk(params, self.two_mass, h).test_risk
            self.assertGreaterEqual(risk, best - 1e-12, msg=h.label)

    def test_optimal_ridge_beats_plug_in_shrinkers(self):
        # w = P X y / n for a precision estimate P is the singular-value map sqrt(x) P(x)
        params = RegressionModelParams(1.0, 2.0, TWO_MASS)
        spec = self.two_mass_over
        best = predicted_test_risk(params, spec, ridge_shrinkage(params.optimal_lambda)).test_risk
        covariance = lp_covariance_shrinker(spec)
        precisions = [precision_from_covariance(spec, covariance)]
        precisions += [precision_from_covariance(spec, ShrinkageFunction.closed("ridge_inverse", lam=lam))
                       for lam in (0.5, 2.0)]
        menu = [ShrinkageFunction.from_grid(spec.grid, np.sqrt(spec.grid) * P.on_grid(spec.grid), 0.0)
                for P in precisions]
        menu += [ridge_shrinkage(lam) for lam in (0.1, 1.0, 5.0)]
        menu += [gd_shrinkage(t, 0.0) for t in (0.5, 2.0, 10.0)]
        for h in menu:
            risk = predicted_test_risk(params, spec, h).test_risk
            self.assertGreaterEqual(risk, best - 1e-8, msg=h.label)

    def test_optimal_ridge_on_identity(self):
        params = RegressionModelParams(0.5, 0.5, IDENTITY)
        lambdas = [0.5, 1.0, 1.5, 2.0, 2.5, 4.0, 8.0]
        risks = [predicted_test_risk(params, self.identity, ridge_shrinkage(lam)).test_risk for lam in lambdas]
        self.assertEqual(lambdas[int(np.argmin(risks))], 2.0)

    def test_overparameterized_ridge_is_finite(self):
        params = RegressionModelParams(1.0, 2.0, IDENTITY)
        report = predicted_test_risk(params, self.identity_over, ridge_shrinkage(0.0))
        self.assertTrue(np.isfinite(report.test_risk))
        self.assertAlmostEqual(report.atom_term, 0.5, delta=1e-8)


class NullPopulationDirectionTests(SimpleTestCase):
    """Features of zero variance: the risk equals that of the model without them.

    Dropping a null weight w0 leaves p (1 - w0) features, so gamma becomes
    gamma (1 - w0) and alpha^2 becomes alpha^2 (1 - w0).
    """

    HALF_NULL = PopulationSpectrum(((0.0, 0.5), (1.0, 0.5)))

    def _pair(self, gamma):
        full = RegressionModelParams(1.0, gamma, self.HALF_NULL)
        kept = RegressionModelParams(np.sqrt(0.5), gamma / 2, IDENTITY)
        return (
            (full, build_limiting_spectrum(self.HALF_NULL, gamma)),
            (kept, build_limiting_spectrum(IDENTITY, gamma / 2)),
        )

    def test_null_estimator(self):
        params = RegressionModelParams(1.0, 0.5, self.HALF_NULL)
        spec = build_limiting_spectrum(self.HALF_NULL, 0.5)
        self.assertAlmostEqual(predicted_test_risk(params, spec, ZERO).test_risk, 1.5, delta=1e-4)
        self.assertAlmostEqual(training_error(params, spec, ZERO), 1.5, delta=1e-4)

    def test_matches_model_without_null_features(self):
        for gamma in (0.5, 3.0):
            (full, full_spec), (kept, kept_spec) = self._pair(gamma)
            for h in (ridge_shrinkage(0.3), gd_shrinkage(2.0, 0.0)):
                self.assertAlmostEqual(
                    predicted_test_risk(full, full_spec, h).test_risk,
                    predicted_test_risk(kept, kept_spec, h).test_risk,
                    delta=1e-7,
                    msg=f"gamma={gamma}, {h.label}",
                )
                self.assertAlmostEqual(
                    training_error(full, full_spec, h),
                    training_error(kept, kept_spec, h),
                    delta=1e-7,
                    msg=f"gamma={gamma}, {h.label}",
                )


class LearningCurveTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.identity = build_limiting_spectrum(IDENTITY, 0.5)
        cls.identity_over = build_limiting_spectrum(IDENTITY, 2.0)
        cls.two_mass = build_limiting_spectrum(TWO_MASS, 1 / 3)

    def test_start_equals_variance_of_response(self):
        params = RegressionModelParams(1.0, 1 / 3, TWO_MASS)
        curve = learning_curve(params, self.two_mass, 0.1, [0.0, 1.0])
        self.assertAlmostEqual(curve.test_risk[0], 3.5, delta=1e-4)
        self.assertAlmostEqual(curve.train_error[0], 3.5, delta=1e-4)

    def test_train_error_non_increasing(self):
        params = RegressionModelParams(1.0, 1 / 3, TWO_MASS)
        for lam in (0.0, 0.3, 3.0):
            curve = learning_curve(params, self.two_mass, lam)
            self.assertLessEqual(np.diff(curve.train_error).max(), 1e-12, msg=f"lambda={lam}")

    def test_unregularized_train_error_limit(self):
        params = RegressionModelParams(1.0, 0.5, IDENTITY)
        self.assertAlmostEqual(train_error(params, self.identity, 1e-8, 1e6), 0.5, delta=1e-3)
        self.assertAlmostEqual(final_train_error(params, self.identity, 1e-8), 0.5, delta=1e-3)

    def test_long_time_matches_ridge(self):
        params = RegressionModelParams(1.0, 1 / 3, TWO_MASS)
        curve = learning_curve(params, self.two_mass, 0.25, [1.0, 1e6])
        ridge = predicted_test_risk(params, self.two_mass, ridge_shrinkage(0.25)).test_risk
        self.assertAlmostEqual(curve.test_risk[-1], ridge, delta=1e-6)
        self.assertAlmostEqual(curve.train_error[-1], final_train_error(params, self.two_mass, 0.25), delta=1e-6)

    def test_frame_columns(self):
        params = RegressionModelParams(1.0, 0.5, IDENTITY)
        frame = learning_curve(params, self.identity, 0.5, [0.1, 1.0]).to_frame()
        self.assertEqual(list(frame.columns), ["t", "test_risk", "train_error"])


class ClosedFormCurveTests(SimpleTestCase):
    def test_agrees_with_general_solver(self):
        times = np.array([0.0, 0.1, 1.0, 5.0, 50.0])
        for gamma in (0.5, 2.0):
            spec = build_limiting_spectrum(IDENTITY, gamma)
            params = RegressionModelParams(0.5, gamma, IDENTITY)
            general = learning_curve(params, spec, 0.0, times)
            closed = closed_form_identity_curve(0.5, gamma, times)
            np.testing.assert_allclose(closed.test_risk, general.test_risk, atol=1e-4)
            np.testing.assert_allclose(closed.train_error, general.train_error, atol=1e-4)

    def test_start(self):
        curve = closed_form_identity_curve(0.5, 0.25, [0.0])
        self.assertAlmostEqual(curve.test_risk[0], 1.25, places=8)

    def test_overparameterized_long_time_is_finite(self):
        curve = closed_form_identity_curve(1.0, 2.0, [1e3])
        self.assertTrue(np.isfinite(curve.test_risk[0]))
        self.assertGreater(curve.test_risk[0], 1.5)

    def test_overtraining_starts_earlier_for_larger_ratio(self):
        times = np.geomspace(1e-2, 1e3, 400)
        argmins = []
        for gamma in (0.25, 0.5, 0.75):
            risk = closed_form_identity_curve(0.5, gamma, times).test_risk
            i = int(np.argmin(risk))
            self.assertTrue(0 < i < times.size - 1, msg=f"gamma={gamma}")
            argmins.append(times[i])
        self.assertGreater(argmins[0], argmins[1])
        self.assertGreater(argmins[1], argmins[2])


class MonotoneAndStoppingTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.params = RegressionModelParams(0.5, 0.5, IDENTITY)
        cls.spec = build_limiting_spectrum(IDENTITY, 0.5)

    def test_monotone_at_and_above_optimal_penalty(self):
        for lam in (2.0, 20.0):
            monotone, increase = check_overregularized_monotone(self.params, self.spec, lam)
            self.assertTrue(monotone, msg=f"lambda={lam}, increase={increase}")

    def test_precondition(self):
        with self.assertRaises(PreconditionError):
            check_overregularized_monotone(self.params, self.spec, 0.2)

    def test_diagnostic_reports_violation(self):
        monotone, increase = check_overregularized_monotone(self.params, self.spec, 0.2, diagnostic=True)
        self.assertFalse(monotone)
        self.assertGreater(increase, 0)

    def test_stopping_time_interior_for_small_penalty(self):
        t, risk = optimal_stopping_time(self.params, self.spec, 0.2)
        self.assertTrue(1e-2 < t < 1e3)
        full = predicted_test_risk(self.params, self.spec, ridge_shrinkage(0.2)).test_risk
        self.assertLess(risk, full)

    def test_early_stopping_table(self):
        table = early_stopping_comparison(self.params, self.spec, [0.2, 2.0])
        self.assertEqual(list(table.columns), ["lambda", "fully_trained_risk", "early_stopped_risk", "optimal_time"])
        self.assertLess(table.loc[0, "early_stopped_risk"], table.loc[0, "fully_trained_risk"])
        self.assertAlmostEqual(table.loc[1, "optimal_time"], 1e3, delta=1.0)

    def test_risk_surface_long_time_minimum(self):
        lambdas = [0.5, 1.0, 2.0, 4.0]
        surface = risk_surface(self.params, self.spec, lambdas, [1e3])
        self.assertEqual(list(surface.columns), ["t", "lambda", "risk"])
        self.assertEqual(surface.loc[surface["risk"].idxmin(), "lambda"], 2.0)
