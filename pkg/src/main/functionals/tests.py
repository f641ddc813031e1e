"""Unit tests for the Functionals app.

H = delta_1 gives exact answers: there M(h) and T(h) both reduce to
integrals against the Marchenko-Pastur law. The Monte Carlo trace
oracles are tagged "slow".
"""

import numpy as np
from django.test import SimpleTestCase, tag

from core.exceptions import ConfigError, DomainError, EvaluationError
from spectrum.builder import build_limiting_spectrum
from spectrum.models import PopulationSpectrum
from spectrum.solver import solve_stieltjes

from .models import FunctionalValue, ShrinkageFunction
from .shrinkers import (
    lp_covariance_shrinker,
    lp_precision_shrinker,
    precision_from_covariance,
    resolve_shrinker,
)
from .trace import (
    asymptotic_frobenius_loss,
    kernel_K,
    m_functional,
    m_quadratic_form,
    mass_vector,
    shrinkage_vector,
    t_bilinear,
    t_functional,
    t_quadratic_form,
    two_resolvent_limit,
)

IDENTITY = PopulationSpectrum.point_mass(1.0)
TWO_MASS = PopulationSpectrum(((1.0, 0.5), (4.0, 0.5)))


def _spectra():
    # built once per process; the solves dominate the runtime of this module
    if not _spectra.cache:
        _spectra.cache.update(
            identity_half=build_limiting_spectrum(IDENTITY, 0.5),
            identity_two=build_limiting_spectrum(IDENTITY, 2.0),
            two_mass_third=build_limiting_spectrum(TWO_MASS, 1 / 3),
            two_mass_two=build_limiting_spectrum(TWO_MASS, 2.0),
        )
    return _spectra.cache


_spectra.cache = {}


class ShrinkageFunctionTests(SimpleTestCase):
    def test_ridge_value(self):
        h = ShrinkageFunction.closed("ridge", lam=1 / 3)
        self.assertAlmostEqual(h(1.0), 0.75)
        self.assertEqual(h(0.0), 0.0)

    def test_gradient_flow_limits(self):
        self.assertEqual(ShrinkageFunction.closed("gradient_flow", t=0.0, lam=0.5)(2.0), 0.0)
        late = ShrinkageFunction.closed("gradient_flow", t=1e6, lam=1 / 3)
        self.assertAlmostEqual(late(1.0), 0.75, places=6)
        unregularized = ShrinkageFunction.closed("gradient_flow", t=1.0, lam=0.0)
        self.assertAlmostEqual(unregularized(1.0), 1 - np.exp(-1.0), places=12)
        self.assertEqual(unregularized(0.0), 0.0)

    def test_vectorized_evaluation(self):
        h = ShrinkageFunction.closed("ridge_inverse", lam=1.0)
        np.testing.assert_allclose(h(np.array([0.0, 1.0, 3.0])), [1.0, 0.5, 0.25])

    def test_polynomial_and_exponential(self):
        poly = ShrinkageFunction.closed("polynomial", coefficients=[1.0, 2.0, 3.0])
        self.assertAlmostEqual(poly(2.0), 17.0)
        self.assertEqual(poly.value_at_zero(), 1.0)
        self.assertAlmostEqual(ShrinkageFunction.closed("exponential", rate=1.0)(1.0), np.exp(-1.0))

    def test_missing_parameter(self):
        with self.assertRaises(ConfigError):
            ShrinkageFunction.closed("ridge")

    def test_negative_lambda_rejected(self):
        with self.assertRaises(ConfigError):
            ShrinkageFunction.closed("ridge", lam=-1.0)

    def test_unknown_family(self):
        with self.assertRaises(ConfigError):
            ShrinkageFunction.from_json({"family": "lasso", "lambda": 1.0})

    def test_json_payloads(self):
        h = ShrinkageFunction.from_json('{"family": "ridge", "lambda": 0.33}')
        self.assertEqual(h.param("lambda"), 0.33)
        self.assertEqual(h.to_json(), {"family": "ridge", "lambda": 0.33})
        grid = np.array([1.0, 2.0, 3.0])
        g = ShrinkageFunction.from_json({"grid": [1.0, 0.5, 0.25], "at_zero": 2.0}, grid=grid)
        self.assertEqual(g.kind, "grid")
        self.assertEqual(g(0.0), 2.0)
        self.assertAlmostEqual(g(1.5), 0.75)
        self.assertEqual(g(10.0), 0.25)

    def test_grid_payload_needs_abscissae(self):
        with self.assertRaises(ConfigError):
            ShrinkageFunction.from_json({"grid": [1.0], "at_zero": 0.0})

    def test_non_finite_values(self):
        h = ShrinkageFunction.from_grid([1.0, 2.0], [1.0, np.inf], 0.0)
        with self.assertRaises(EvaluationError):
            h(1.5)

    def test_flagged_error_estimate(self):
        self.assertTrue(FunctionalValue(1.0, 1e-3, 1.0).flagged)
        self.assertFalse(FunctionalValue(1.0, 1e-12, 1.0).flagged)


class MFunctionalTests(SimpleTestCase):
    def test_constant_gives_mean_of_population(self):
        one = ShrinkageFunction.closed("constant", c=1.0)
        for key in ("two_mass_third", "two_mass_two"):
            value = m_functional(_spectra()[key], one)
            self.assertAlmostEqual(value.value, 2.5, delta=1e-4, msg=key)

    def test_identity_population_reduces_to_integral(self):
        spec = _spectra()["identity_half"]
        value = m_functional(spec, ShrinkageFunction.closed("identity"))
        self.assertAlmostEqual(value.value, 1.0, delta=1e-4)
        self.assertFalse(value.flagged)

    def test_atom_term_only_when_overparameterized(self):
        one = ShrinkageFunction.closed("constant", c=1.0)
        self.assertEqual(m_functional(_spectra()["two_mass_third"], one).atom, 0.0)
        self.assertGreater(m_functional(_spectra()["two_mass_two"], one).atom, 0.0)

    def test_linearity(self):
        spec = _spectra()["two_mass_two"]
        h1 = ShrinkageFunction.closed("ridge_inverse", lam=1.0)
        h2 = ShrinkageFunction.closed("exponential", rate=1.0)
        combo = ShrinkageFunction.from_grid(
            spec.grid,
            2.0 * h1.on_grid(spec.grid) - 3.0 * h2.on_grid(spec.grid),
            2.0 * h1.value_at_zero() - 3.0 * h2.value_at_zero(),
        )
        expected = 2.0 * m_functional(spec, h1).value - 3.0 * m_functional(spec, h2).value
        self.assertAlmostEqual(m_functional(spec, combo).value, expected, delta=1e-10)

    def test_quadratic_form_matches_squared_function(self):
        spec = _spectra()["two_mass_two"]
        h = ShrinkageFunction.closed("ridge_inverse", lam=0.5)
        v = shrinkage_vector(spec, h)
        squared = ShrinkageFunction.from_grid(spec.grid, h.on_grid(spec.grid) ** 2, h.value_at_zero() ** 2)
        self.assertAlmostEqual(v @ m_quadratic_form(spec) @ v, m_functional(spec, squared).value, delta=1e-12)

    def test_mass_vector(self):
        spec = _spectra()["two_mass_two"]
        v = shrinkage_vector(spec, ShrinkageFunction.closed("constant", c=1.0))
        self.assertAlmostEqual(mass_vector(spec) @ v, 1.0, delta=1e-4)


class KernelTests(SimpleTestCase):
    def test_symmetry(self):
        spec = _spectra()["two_mass_third"]
        a, b = spec.support[0]
        x, y = a + 0.3 * (b - a), a + 0.7 * (b - a)
        kxy, kyx = kernel_K(spec, x, y), kernel_K(spec, y, x)
        self.assertLess(abs(kxy - kyx), 1e-10 * max(1.0, abs(kxy)))

    def test_continuity_at_diagonal(self):
        spec = _spectra()["two_mass_third"]
        a, b = spec.support[0]
        x = a + 0.4 * (b - a)
        diagonal = kernel_K(spec, x, x)
        nearby = kernel_K(spec, x, x + 1e-4)
        self.assertLess(abs(diagonal - nearby), 1e-3 * abs(diagonal) + 1e-8)

    def test_outside_support(self):
        spec = _spectra()["two_mass_third"]
        with self.assertRaises(DomainError):
            kernel_K(spec, spec.upper_edge + 5.0, spec.upper_edge + 5.0)


class TFunctionalTests(SimpleTestCase):
    def test_identity_population_second_moment(self):
        spec = _spectra()["identity_half"]
        value = t_functional(spec, ShrinkageFunction.closed("identity"))
        self.assertAlmostEqual(value.value, 1.5, delta=5e-4)

    def test_zero_function(self):
        spec = _spectra()["two_mass_two"]
        self.assertEqual(t_functional(spec, ShrinkageFunction.closed("constant", c=0.0)).value, 0.0)

    def test_identity_population_collapse(self):
        h = ShrinkageFunction.closed("polynomial", coefficients=[1.0, -0.5, 0.25, 0.1])
        for key in ("identity_half", "identity_two"):
            spec = _spectra()[key]
            values = h.on_grid(spec.grid)
            h0 = h.value_at_zero()
            expected = spec.expect(values**2, at_zero=h0 * h0)
            self.assertAlmostEqual(t_functional(spec, h).value, expected, delta=5e-4, msg=key)

    def test_quadratic_scaling(self):
        spec = _spectra()["two_mass_two"]
        h = ShrinkageFunction.closed("polynomial", coefficients=[0.5, 1.0])
        base = t_functional(spec, h).value
        self.assertAlmostEqual(t_functional(spec, h.scaled(3.0)).value, 9.0 * base, delta=1e-10 * max(1.0, base))

    def test_cauchy_schwarz(self):
        families = [
            ShrinkageFunction.closed("ridge_inverse", lam=0.5),
            ShrinkageFunction.closed("identity"),
            ShrinkageFunction.closed("exponential", rate=1.0),
        ]
        for key in ("two_mass_third", "two_mass_two"):
            spec = _spectra()[key]
            for h in families:
                t = t_functional(spec, h).value
                m = m_functional(spec, h).value
                self.assertGreaterEqual(t, m * m - 1e-4, msg=f"{key} {h.label}")

    def test_quadratic_form_is_symmetric(self):
        Q = t_quadratic_form(_spectra()["two_mass_two"])
        np.testing.assert_allclose(Q, Q.T, atol=1e-14)

    def test_bilinear_on_diagonal(self):
        spec = _spectra()["two_mass_third"]
        h = ShrinkageFunction.closed("ridge_inverse", lam=1.0)
        self.assertAlmostEqual(t_bilinear(spec, h, h), t_functional(spec, h).value, delta=1e-10)

    def test_bilinear_symmetry(self):
        spec = _spectra()["two_mass_two"]
        h1 = ShrinkageFunction.closed("ridge_inverse", lam=1.0)
        h2 = ShrinkageFunction.closed("identity")
        self.assertAlmostEqual(t_bilinear(spec, h1, h2), t_bilinear(spec, h2, h1), delta=1e-10)

    @tag("slow")
    def test_trace_oracle(self):
        rng = np.random.Generator(np.random.Philox(3))
        spec = _spectra()["two_mass_third"]
        h = ShrinkageFunction.closed("ridge_inverse", lam=0.5)
        p, n = 1000, 3000
        scale = np.sqrt(np.repeat([1.0, 4.0], p // 2))
        m_values, t_values = [], []
        for _ in range(6):
            X = scale[:, None] * rng.standard_normal((p, n))
            lam, V = np.linalg.eigh(X @ X.T / n)
            H = (V * h(np.maximum(lam, 0.0))) @ V.T
            SH = scale[:, None] ** 2 * H
            m_values.append(np.trace(SH) / p)
            t_values.append(np.sum(SH * SH.T) / p)
        self.assertLess(abs(np.mean(m_values) - m_functional(spec, h).value), 2e-2)
        self.assertLess(abs(np.mean(t_values) - t_functional(spec, h).value), 3e-2)


class TwoResolventTests(SimpleTestCase):
    def test_swap(self):
        spec = _spectra()["two_mass_third"]
        z1, z2 = 1 + 1j, 2 + 1j
        self.assertLess(abs(two_resolvent_limit(spec, z1, z2) - two_resolvent_limit(spec, z2, z1)), 1e-12)

    def test_conjugate_arguments(self):
        spec = _spectra()["two_mass_third"]
        z1, z2 = 1 + 1j, 2 + 0.5j
        upper = two_resolvent_limit(spec, z1, z2)
        lower = two_resolvent_limit(spec, np.conj(z1), np.conj(z2))
        self.assertLess(abs(lower - np.conj(upper)), 1e-10)

    def test_identity_population(self):
        # with Sigma = I the limit is the divided difference of the Stieltjes transform
        spec = _spectra()["identity_half"]
        z1, z2 = 1 + 1j, 2 + 1j
        (m1, m2), _ = solve_stieltjes(IDENTITY, 0.5, np.array([z1, z2]))
        expected = (m1 - m2) / (z1 - z2)
        self.assertLess(abs(two_resolvent_limit(spec, z1, z2) - expected), 1e-8)

    def test_coincident_arguments(self):
        spec = _spectra()["two_mass_two"]
        z = 1.5 + 0.7j
        same = two_resolvent_limit(spec, z, z)
        close = two_resolvent_limit(spec, z, z + 1e-6)
        self.assertLess(abs(same - close), 1e-5 * abs(same))

    @tag("slow")
    def test_trace_oracle(self):
        rng = np.random.Generator(np.random.Philox(17))
        spec = _spectra()["identity_half"]
        p, n = 1000, 2000
        z1, z2 = 1 + 1j, 2 + 1j
        samples = []
        for _ in range(5):
            X = rng.standard_normal((p, n))
            lam = np.linalg.eigvalsh(X @ X.T / n)
            samples.append(np.mean(1.0 / ((lam - z1) * (lam - z2))))
        self.assertLess(abs(np.mean(samples) - two_resolvent_limit(spec, z1, z2)), 2e-2)


class ShrinkerTests(SimpleTestCase):
    def test_covariance_shrinker_is_one_for_identity(self):
        h = lp_covariance_shrinker(_spectra()["identity_half"])
        np.testing.assert_allclose(h.values, 1.0, atol=1e-6)

    def test_covariance_shrinker_at_zero(self):
        h = lp_covariance_shrinker(_spectra()["identity_two"])
        self.assertAlmostEqual(h.value_at_zero(), 1.0, delta=1e-4)

    def test_covariance_shrinker_minimizes_frobenius_loss(self):
        spec = _spectra()["two_mass_third"]
        best = asymptotic_frobenius_loss(spec, lp_covariance_shrinker(spec))
        competitors = [ShrinkageFunction.closed("identity")]
        competitors += [ShrinkageFunction.closed("ridge_inverse", lam=lam) for lam in (0.1, 0.5, 1.0, 5.0)]
        for h in competitors:
            self.assertLess(best, asymptotic_frobenius_loss(spec, h), msg=h.label)

    def test_frobenius_loss_of_null_and_exact_estimators(self):
        spec = _spectra()["identity_half"]
        self.assertAlmostEqual(asymptotic_frobenius_loss(spec, lp_covariance_shrinker(spec)), 0.0, delta=1e-4)
        zero = ShrinkageFunction.closed("constant", c=0.0)
        two_mass = _spectra()["two_mass_third"]
        self.assertAlmostEqual(asymptotic_frobenius_loss(two_mass, zero), 8.5, delta=1e-10)

    def test_precision_shrinker_positive(self):
        h = lp_precision_shrinker(_spectra()["identity_half"])
        self.assertTrue(np.all(np.isfinite(h.values)))
        self.assertTrue(np.all(h.values > 0))

    def test_precision_shrinker_scale_equivariance(self):
        base = lp_precision_shrinker(_spectra()["identity_half"])
        scaled_spec = build_limiting_spectrum(PopulationSpectrum.point_mass(4.0), 0.5)
        scaled = lp_precision_shrinker(scaled_spec)
        np.testing.assert_allclose(scaled(4.0 * base.grid[1:-1]), base.values[1:-1] / 4.0, rtol=1e-3)

    def test_precision_shrinker_rejects_overparameterized(self):
        with self.assertRaises(DomainError):
            lp_precision_shrinker(_spectra()["identity_two"])

    def test_precision_from_covariance(self):
        spec = _spectra()["identity_half"]
        h = precision_from_covariance(spec, lp_covariance_shrinker(spec))
        np.testing.assert_allclose(h.values, 1.0, atol=1e-6)

    def test_resolve_shrinker(self):
        spec = _spectra()["identity_half"]
        self.assertEqual(resolve_shrinker({"family": "ridge", "lambda": 1.0}).kind, "closed_form")
        self.assertEqual(resolve_shrinker({"family": "lp_covariance"}, spec).kind, "grid")
        on_grid = resolve_shrinker({"grid": list(np.ones(len(spec))), "at_zero": 1.0}, spec)
        self.assertEqual(on_grid(1.0), 1.0)
        with self.assertRaises(ConfigError):
            resolve_shrinker({"family": "lp_covariance"})
