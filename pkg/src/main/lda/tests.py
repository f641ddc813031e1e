"""Unit tests for the LDA app.

Theta is checked through its exact invariances; the shrinkage programs
through optimality against feasible competitors.
"""

import numpy as np
from django.test import SimpleTestCase

from core.exceptions import ConfigError, DomainError, NumericalError
from functionals.models import ShrinkageFunction
from functionals.shrinkers import lp_covariance_shrinker, precision_from_covariance, resolve_shrinker
from functionals.trace import m_quadratic_form, mass_vector, shrinkage_vector, t_quadratic_form
from spectrum.builder import build_limiting_spectrum
from spectrum.models import PopulationSpectrum

from .classifier import best_ridge, compare_shrinkers, estimate_alpha2, theta
from .models import LdaModelParams
from .qp import floor_psd, project, solve_simplex_qp
from .shrinkage import (
    mean_shrinker,
    mean_shrinker_loss,
    optimal_shrinkage_qp,
    relaxed_objective,
    relaxed_optimum,
)

IDENTITY = PopulationSpectrum.point_mass(1.0)
TWO_MASS = PopulationSpectrum(((1.0, 0.5), (4.0, 0.5)))
WIDE = PopulationSpectrum(((0.75, 0.5), (15.0, 0.5)))


def _objective(params, spec, h):
    """s M(h^2) + T(h) after normalizing int h dF = 1."""
    v = shrinkage_vector(spec, h)
    v = v / (mass_vector(spec) @ v)
    return float(v @ (params.s * m_quadratic_form(spec) + t_quadratic_form(spec)) @ v)


class ParamsTests(SimpleTestCase):
    def test_alpha_must_be_positive(self):
        with self.assertRaises(ConfigError):
            LdaModelParams(0.0, 0.5, TWO_MASS)

    def test_population_bounded_away_from_zero(self):
        with self.assertRaises(ConfigError):
            LdaModelParams(1.0, 0.5, PopulationSpectrum(((0.0, 0.5), (1.0, 0.5))))

    def test_signal_to_noise(self):
        self.assertEqual(LdaModelParams(2.0, 0.5, TWO_MASS).s, 8.0)


class ThetaTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.spec = build_limiting_spectrum(TWO_MASS, 0.5, 128)
        cls.spec_over = build_limiting_spectrum(TWO_MASS, 2.0, 128)

    def test_scale_invariance(self):
        params = LdaModelParams(2.0, 0.5, TWO_MASS)
        for h in (
            ShrinkageFunction.closed("ridge_inverse", lam=1.0),
            ShrinkageFunction.closed("inverse"),
            precision_from_covariance(self.spec, lp_covariance_shrinker(self.spec)),
        ):
            base = theta(params, self.spec, h).theta
            grid = self.spec.grid
            stretched = ShrinkageFunction.from_grid(grid, 7.3 * h.on_grid(grid), 7.3 * h.value_at_zero())
            scaled = theta(params, self.spec, stretched).theta
            self.assertAlmostEqual(scaled, base, delta=1e-12 * base, msg=h.label)

    def test_report_decomposition(self):
        params = LdaModelParams(2.0, 2.0, TWO_MASS)
        report = theta(params, self.spec_over, ShrinkageFunction.closed("ridge_inverse", lam=1.0))
        self.assertAlmostEqual(report.theta, report.numerator / (report.denom_M + report.denom_T), delta=1e-12)
        self.assertTrue(0 < report.error <= 0.5)

    def test_theta_grows_with_signal(self):
        h = ShrinkageFunction.closed("ridge_inverse", lam=1.0)
        thetas = [theta(LdaModelParams(a, 0.5, TWO_MASS), self.spec, h).theta for a in (0.5, 1.0, 2.0, 4.0)]
        self.assertTrue(np.all(np.diff(thetas) > 0))
        tiny = theta(LdaModelParams(1e-3, 0.5, TWO_MASS), self.spec, h)
        self.assertAlmostEqual(tiny.error, 0.5, delta=1e-3)

    def test_negative_shrinkage_rejected(self):
        params = LdaModelParams(1.0, 0.5, TWO_MASS)
        with self.assertRaises(DomainError):
            theta(params, self.spec, ShrinkageFunction.closed("polynomial", coefficients=[-1.0, 0.5]))

    def test_degenerate_classifier(self):
        params = LdaModelParams(1.0, 0.5, TWO_MASS)
        report = theta(params, self.spec, ShrinkageFunction.closed("constant", c=0.0))
        self.assertTrue(report.degenerate)
        self.assertEqual(report.error, 0.5)

    def test_best_ridge(self):
        params = LdaModelParams(2.0, 0.5, TWO_MASS)
        lam, report = best_ridge(params, self.spec)
        for other in (1e-3, 1e-2, 0.1, 1.0, 10.0):
            h = ShrinkageFunction.closed("ridge_inverse", lam=other)
            self.assertGreaterEqual(report.theta, theta(params, self.spec, h).theta - 1e-9, msg=other)
        self.assertGreater(lam, 0)


class EstimateAlpha2Tests(SimpleTestCase):
    def test_difference(self):
        estimate = estimate_alpha2(2.6, 2500.0, 2000)
        self.assertAlmostEqual(estimate.value, 1.35)
        self.assertFalse(estimate.clamped)

    def test_clamped(self):
        estimate = estimate_alpha2(1.0, 2500.0, 2000)
        self.assertEqual(float(estimate), 0.0)
        self.assertAlmostEqual(estimate.raw, -0.25)
        self.assertTrue(estimate.clamped)

    def test_bad_count(self):
        with self.assertRaises(ConfigError):
            estimate_alpha2(1.0, 1.0, 0)


class SimplexQpTests(SimpleTestCase):
    def test_projection(self):
        b = np.array([1.0, 2.0, 0.5])
        y = project(np.array([3.0, -1.0, 0.2]), b)
        self.assertAlmostEqual(b @ y, 1.0, places=12)
        self.assertTrue(np.all(y >= 0))

    def test_diagonal_program(self):
        # min sum d_i v_i^2 s.t. sum v_i = 1 puts v_i proportional to 1/d_i
        d = np.array([1.0, 2.0, 4.0])
        result = solve_simplex_qp(np.diag(d), np.ones(3))
        expected = (1.0 / d) / (1.0 / d).sum()
        np.testing.assert_allclose(result.v, expected, rtol=1e-5)
        self.assertFalse(result.regularized)

    def test_bound_binds(self):
        # without the bound the minimizer on v1 + v2 = 1 is (1.5, -0.5)
        P = np.array([[1.0, 2.0], [2.0, 5.0]])
        result = solve_simplex_qp(P, np.ones(2))
        self.assertAlmostEqual(result.v[1], 0.0, places=6)
        self.assertAlmostEqual(result.v[0], 1.0, places=6)

    def test_floor_is_reported(self):
        P = np.diag([1.0, -1e-5])
        floored, size = floor_psd(P)
        self.assertAlmostEqual(size, 1e-5, places=12)
        self.assertGreaterEqual(np.linalg.eigvalsh(floored)[0], -1e-15)
        result = solve_simplex_qp(P, np.ones(2))
        self.assertTrue(result.regularized)
        self.assertAlmostEqual(result.psd_floor, 1e-5, places=12)

    def test_indefinite_form_rejected(self):
        with self.assertRaises(NumericalError):
            floor_psd(np.diag([1.0, -0.1]))


class OptimalShrinkageTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.spec = build_limiting_spectrum(TWO_MASS, 0.5, 128)
        cls.spec_over = build_limiting_spectrum(TWO_MASS, 2.0, 128)

    def test_solution_is_feasible(self):
        for spec in (self.spec, self.spec_over):
            params = LdaModelParams(2.0, spec.gamma, TWO_MASS)
            solution = optimal_shrinkage_qp(params, spec)
            v = shrinkage_vector(spec, solution.h_opt)
            self.assertAlmostEqual(mass_vector(spec) @ v, 1.0, delta=1e-8)
            self.assertTrue(np.all(v >= 0))
            self.assertLess(solution.kkt_residual, 1e-6)

    def test_beats_ridge_family(self):
        params = LdaModelParams(1.5, 0.5, TWO_MASS)
        solution = optimal_shrinkage_qp(params, self.spec)
        for lam in (0.01, 0.1, 0.5, 1.0, 5.0):
            h = ShrinkageFunction.closed("ridge_inverse", lam=lam)
            competitor = _objective(params, self.spec, h)
            self.assertLessEqual(solution.objective, competitor * (1 + 1e-6), msg=lam)

    def test_large_signal_recovers_frobenius_precision(self):
        alpha = np.sqrt(1e6 * 0.5)
        params = LdaModelParams(alpha, 0.5, TWO_MASS)
        solution = optimal_shrinkage_qp(params, self.spec)
        target = self.spec.grid * self.spec.modulus2
        target = target / self.spec.expect(target)
        inner = ~self.spec.edge_mask
        np.testing.assert_allclose(solution.h_opt.values[inner], target[inner], rtol=1e-2)

    def test_grid_size(self):
        params = LdaModelParams(2.0, 0.5, TWO_MASS)
        with self.assertRaises(ConfigError):
            optimal_shrinkage_qp(params, self.spec, grid_size=16)
        solution = optimal_shrinkage_qp(params, self.spec, grid_size=64)
        self.assertLess(len(solution.h_opt.grid), len(self.spec.grid))
        self.assertEqual(list(solution.to_frame().columns), ["x", "h_opt"])

    def test_mean_shrinker_resolves_from_payload(self):
        h = resolve_shrinker({"family": "mean_shrinker", "alpha": 1.0}, self.spec)
        self.assertEqual(h.kind, "grid")


class ShrinkerComparisonTests(SimpleTestCase):
    def test_optimal_lowest_and_unregularized_highest(self):
        spec = build_limiting_spectrum(WIDE, 0.75, 256)
        table = compare_shrinkers(spec, [1.0, 2.0, 3.0])
        competitors = ["error_lp_cov", "error_lp_prec", "error_ridge_best", "error_identity"]
        for _, row in table.iterrows():
            for column in competitors:
                self.assertLessEqual(row["error_optimal"], row[column] + 1e-6, msg=f"{column} at {row['alpha']}")
            self.assertEqual(max(competitors, key=lambda c: row[c]), "error_identity")
            self.assertLess(abs(row["error_lp_cov"] - row["error_lp_prec"]), 2e-3)
            for column in ("error_lp_cov", "error_lp_prec"):
                self.assertLessEqual(row[column], row["error_ridge_best"] + 1e-3, msg=f"{column} at {row['alpha']}")


class RelaxedOptimumTests(SimpleTestCase):
    def test_identity_population_gives_constant(self):
        spec = build_limiting_spectrum(IDENTITY, 0.5, 128)
        solution = relaxed_optimum(LdaModelParams(1.0, 0.5, IDENTITY), spec)
        np.testing.assert_allclose(solution.h_opt.values, 1.0, atol=1e-6)

    def test_numeric_relaxation_is_affine(self):
        spec = build_limiting_spectrum(TWO_MASS, 1 / 3, 128)
        solution = relaxed_optimum(LdaModelParams(2.0, 1 / 3, TWO_MASS), spec)
        self.assertLess(solution.relaxation_fit.residual, 1e-3)
        self.assertAlmostEqual(spec.expect(solution.h_opt.values), 1.0, delta=1e-10)

    def test_numeric_relaxation_is_affine_on_wide_population(self):
        spec = build_limiting_spectrum(WIDE, 0.75, 128)
        solution = relaxed_optimum(LdaModelParams(4.0, 0.75, WIDE), spec)
        self.assertFalse(solution.bound_active)
        self.assertLess(solution.relaxation_fit.residual, 1e-3)
        self.assertAlmostEqual(spec.expect(solution.h_opt.values), 1.0, delta=1e-10)

    def test_weak_signal_keeps_shrinkage_nonnegative(self):
        # for small s the affine shape dips below 0 on the upper bulk
        spec = build_limiting_spectrum(TWO_MASS, 1 / 3, 128)
        params = LdaModelParams(0.1, 1 / 3, TWO_MASS)
        solution = relaxed_optimum(params, spec)
        self.assertTrue(solution.bound_active)
        v = shrinkage_vector(spec, solution.h_opt)
        self.assertTrue(np.all(solution.h_opt.values >= 0))
        self.assertAlmostEqual(mass_vector(spec) @ v, 1.0, delta=1e-8)
        exact = optimal_shrinkage_qp(params, spec)
        self.assertLessEqual(solution.objective, relaxed_objective(params, spec, exact.h_opt) * (1 + 1e-4))

    def test_relaxation_bound(self):
        spec = build_limiting_spectrum(TWO_MASS, 1 / 3, 128)
        params = LdaModelParams(2.0, 1 / 3, TWO_MASS)
        relaxed = relaxed_optimum(params, spec)
        exact = optimal_shrinkage_qp(params, spec)
        self.assertLessEqual(relaxed.objective, relaxed_objective(params, spec, exact.h_opt) + 1e-9)

    def test_overparameterized_rejected(self):
        spec = build_limiting_spectrum(TWO_MASS, 2.0, 128)
        with self.assertRaises(DomainError):
            relaxed_optimum(LdaModelParams(1.0, 2.0, TWO_MASS), spec)


class MeanShrinkerTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.identity = build_limiting_spectrum(IDENTITY, 0.5, 128)
        cls.spec_over = build_limiting_spectrum(TWO_MASS, 2.0, 128)

    def test_identity_population(self):
        r = mean_shrinker(LdaModelParams(1.0, 0.5, IDENTITY), self.identity)
        np.testing.assert_allclose(r.values, 2.0 / 3.0, atol=1e-6)

    def test_bounded_between_zero_and_one(self):
        r = mean_shrinker(LdaModelParams(1.0, 2.0, TWO_MASS), self.spec_over)
        self.assertTrue(np.all((r.values > 0) & (r.values < 1)))
        self.assertTrue(0 < r.value_at_zero() < 1)

    def test_no_shrinkage_for_strong_signal(self):
        r = mean_shrinker(LdaModelParams(1e4, 2.0, TWO_MASS), self.spec_over)
        np.testing.assert_allclose(r.values, 1.0, atol=1e-6)

    def test_beats_constant_shrinkage(self):
        params = LdaModelParams(1.0, 2.0, TWO_MASS)
        best = mean_shrinker_loss(params, self.spec_over, mean_shrinker(params, self.spec_over))
        for c in (0.1, 0.3, 0.5, 0.7, 0.9, 1.0):
            constant = ShrinkageFunction.closed("constant", c=c)
            self.assertLessEqual(best, mean_shrinker_loss(params, self.spec_over, constant) + 1e-12, msg=c)
