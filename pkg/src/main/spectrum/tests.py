"""Unit tests for the Spectrum app.

Most checks use H = delta_1, where the Marchenko-Pastur law is known in
closed form. The Monte Carlo cross-checks are tagged "slow".
"""

import numpy as np
from django.test import SimpleTestCase, tag

from core.conf import override_lab
from core.exceptions import ConfigError, ConvergenceError, DomainError

from .builder import boundary_values, build_limiting_spectrum
from .closed_form import (
    marchenko_pastur_companion,
    marchenko_pastur_density,
    marchenko_pastur_edges,
)
from .models import AspectRatio, PopulationSpectrum
from .quadrature import clenshaw_curtis, interval_rule
from .solver import (
    companion_derivative,
    companion_transform,
    fixed_point_residual,
    solve_stieltjes,
)
from .support import companion_at_zero, find_support

IDENTITY = PopulationSpectrum.point_mass(1.0)
TWO_MASS = PopulationSpectrum(((1.0, 0.5), (4.0, 0.5)))


class PopulationSpectrumTests(SimpleTestCase):
    def test_weights_must_sum_to_one(self):
        with self.assertRaises(ConfigError):
            PopulationSpectrum(((1.0, 0.5), (4.0, 0.4)))

    def test_negative_location_rejected(self):
        with self.assertRaises(ConfigError):
            PopulationSpectrum(((-1.0, 1.0),))

    def test_moments(self):
        self.assertAlmostEqual(TWO_MASS.mean, 2.5)
        self.assertAlmostEqual(TWO_MASS.second_moment, 8.5)

    def test_json_payload(self):
        payload = {"atoms": [{"t": 4.0, "w": 0.5}, {"t": 1.0, "w": 0.5}]}
        H = PopulationSpectrum.from_json(payload)
        self.assertEqual(H.atoms, ((1.0, 0.5), (4.0, 0.5)))
        self.assertEqual(PopulationSpectrum.from_json(H.to_json()).atoms, H.atoms)

    def test_toeplitz_eigenvalues_match_dense_matrix(self):
        H = PopulationSpectrum.toeplitz_ar(0.5, 200)
        dense = np.linalg.eigvalsh(PopulationSpectrum.toeplitz_matrix(0.5, 200))
        np.testing.assert_allclose(np.sort(H.locations), np.sort(dense), rtol=1e-9)
        self.assertAlmostEqual(H.mean, 1.0, places=10)

    def test_uniform(self):
        H = PopulationSpectrum.uniform(range(1, 6))
        self.assertAlmostEqual(H.mean, 3.0)


class AspectRatioTests(SimpleTestCase):
    def test_rejects_one(self):
        with self.assertRaises(ConfigError):
            AspectRatio(1.0005)

    def test_rejects_non_positive(self):
        with self.assertRaises(ConfigError):
            AspectRatio(0.0)

    def test_float_conversion(self):
        self.assertEqual(float(AspectRatio(0.5)), 0.5)


class QuadratureTests(SimpleTestCase):
    def test_integrates_polynomials(self):
        x, w = clenshaw_curtis(16)
        self.assertAlmostEqual(w.sum(), 2.0, places=12)
        self.assertAlmostEqual(np.dot(w, x**4), 0.4, places=12)

    def test_coarse_rule_lives_on_even_nodes(self):
        nodes, fine, coarse = interval_rule(1.0, 3.0, 32)
        self.assertTrue(np.all(coarse[1::2] == 0))
        self.assertAlmostEqual(coarse.sum(), 2.0, places=12)
        self.assertAlmostEqual(np.dot(fine, nodes), 4.0, places=12)

    def test_odd_order_rejected(self):
        with self.assertRaises(ConfigError):
            clenshaw_curtis(7)


class SolveStieltjesTests(SimpleTestCase):
    def test_identity_matches_quadratic_root(self):
        z = 1.0 + 1.0j
        m, m_companion = solve_stieltjes(IDENTITY, 0.5, z)
        expected = marchenko_pastur_companion(z, 0.5)
        self.assertLess(abs(m_companion - expected), 1e-9)
        # m solves m (t (1 - gamma - gamma z m) - z) = 1 at t = 1
        self.assertLess(abs(m * ((1 - 0.5 - 0.5 * z * m) - z) - 1.0), 1e-9)
        self.assertGreater(m.imag, 0)
        self.assertGreater(m_companion.imag, 0)

    def test_residual_below_tolerance(self):
        z = np.array([0.3 + 0.2j, 2.0 + 0.01j, 5.0 + 3.0j])
        _, m_companion = solve_stieltjes(TWO_MASS, 1 / 3, z)
        self.assertLess(fixed_point_residual(TWO_MASS, 1 / 3, z, m_companion).max(), 1e-10)

    def test_scale_equivariance(self):
        z = 3.0 + 0.5j
        m4, _ = solve_stieltjes(PopulationSpectrum.point_mass(4.0), 0.7, z)
        m1, _ = solve_stieltjes(IDENTITY, 0.7, z / 4.0)
        self.assertLess(abs(m4 - m1 / 4.0), 1e-9)

    def test_lower_half_plane_by_reflection(self):
        z = 2.0 + 0.3j
        upper = companion_transform(TWO_MASS, 0.5, z)
        lower = companion_transform(TWO_MASS, 0.5, np.conj(z))
        self.assertLess(abs(lower - np.conj(upper)), 1e-12)

    def test_real_argument_rejected(self):
        with self.assertRaises(DomainError):
            solve_stieltjes(IDENTITY, 0.5, 1.0 + 0.0j)

    @override_lab(FIXED_POINT_MAX_ITER=1, NEWTON_MAX_ITER=0)
    def test_unconverged_iteration_reports_residual(self):
        with self.assertRaises(ConvergenceError) as ctx:
            solve_stieltjes(TWO_MASS, 0.5, 2.0 + 0.3j)
        self.assertGreater(ctx.exception.residual, 1e-10)

    def test_derivative_matches_difference_quotient(self):
        z, h = 1.5 + 0.4j, 1e-6
        d = companion_derivative(TWO_MASS, 0.5, z)
        fd = (companion_transform(TWO_MASS, 0.5, z + h) - companion_transform(TWO_MASS, 0.5, z - h)) / (2 * h)
        self.assertLess(abs(d - fd), 1e-6 * abs(d))

    @tag("slow")
    def test_resolvent_trace_oracle(self):
        rng = np.random.Generator(np.random.Philox(11))
        p, gamma, z = 4000, 1 / 3, 2.0 + 0.01j
        n = int(p / gamma)
        scale = np.sqrt(np.repeat([1.0, 4.0], p // 2))
        X = scale[:, None] * rng.standard_normal((p, n))
        eigs = np.linalg.eigvalsh(X @ X.T / n)
        empirical = np.mean(1.0 / (eigs - z))
        m, _ = solve_stieltjes(TWO_MASS, gamma, z)
        self.assertLess(abs(m - empirical), 2e-2)


class SupportTests(SimpleTestCase):
    def test_identity_support(self):
        (iv,) = find_support(IDENTITY, 0.5)
        a, b = marchenko_pastur_edges(0.5)
        self.assertAlmostEqual(iv.lower, a, places=8)
        self.assertAlmostEqual(iv.upper, b, places=8)

    def test_scaled_support(self):
        (iv,) = find_support(PopulationSpectrum.point_mass(4.0), 0.5)
        a, b = marchenko_pastur_edges(0.5)
        self.assertAlmostEqual(iv.lower, 4 * a, places=7)
        self.assertAlmostEqual(iv.upper, 4 * b, places=7)

    def test_overparameterized_identity_support(self):
        (iv,) = find_support(IDENTITY, 2.0)
        a, b = marchenko_pastur_edges(2.0)
        self.assertAlmostEqual(iv.lower, a, places=8)
        self.assertAlmostEqual(iv.upper, b, places=8)

    def test_two_bulks_separate(self):
        intervals = find_support(TWO_MASS, 0.05)
        self.assertEqual(len(intervals), 2)
        low, high = intervals
        self.assertTrue(low.lower < 1.0 < low.upper)
        self.assertTrue(high.lower < 4.0 < high.upper)
        self.assertLess(low.upper, high.lower)

    def test_support_bounded_by_scaled_edge(self):
        gamma = 1 / 3
        for iv in find_support(TWO_MASS, gamma):
            self.assertGreater(iv.lower, 0)
            self.assertLessEqual(iv.upper, 4.0 * (1 + np.sqrt(gamma)) ** 2)


class BoundaryValueTests(SimpleTestCase):
    def test_identity_modulus(self):
        x = np.linspace(0.2, 2.8, 9)
        f, g = boundary_values(IDENTITY, 0.5, x)
        np.testing.assert_allclose(x * (f**2 + g**2), 1.0, atol=1e-6)

    def test_identity_density(self):
        f, g = boundary_values(IDENTITY, 0.5, 1.5)
        expected = 0.5 * np.pi * marchenko_pastur_density(np.array([1.5]), 0.5)[0]
        self.assertAlmostEqual(g, expected, delta=1e-6)

    def test_edges_have_zero_imaginary_part(self):
        _, b = marchenko_pastur_edges(0.5)
        f, g = boundary_values(IDENTITY, 0.5, b)
        self.assertEqual(g, 0.0)
        self.assertAlmostEqual(b * f * f, 1.0, places=6)

    def test_far_outside_support(self):
        with self.assertRaises(DomainError):
            boundary_values(IDENTITY, 0.5, 10.0)


class CompanionAtZeroTests(SimpleTestCase):
    def test_identity(self):
        m0, m0_prime = companion_at_zero(IDENTITY, 2.0)
        self.assertAlmostEqual(m0, 1.0, places=12)
        self.assertAlmostEqual(m0_prime, 2.0, places=10)

    def test_scaled(self):
        m0, _ = companion_at_zero(PopulationSpectrum.point_mass(3.0), 2.0)
        self.assertAlmostEqual(m0, 1.0 / 3.0, places=12)

    def test_underparameterized_rejected(self):
        with self.assertRaises(DomainError):
            companion_at_zero(IDENTITY, 0.5)

    @tag("slow")
    def test_gram_matrix_oracle(self):
        rng = np.random.Generator(np.random.Philox(5))
        n = 2000
        p = 2 * n
        scale = np.sqrt(np.repeat([1.0, 4.0], p // 2))
        X = scale[:, None] * rng.standard_normal((p, n))
        mu = np.linalg.eigvalsh(X.T @ X / n)
        m0, _ = companion_at_zero(TWO_MASS, 2.0)
        self.assertLess(abs(m0 - np.mean(1.0 / mu)), 2e-2)


class BuildLimitingSpectrumTests(SimpleTestCase):
    def test_closed_form_density(self):
        for gamma in (0.25, 0.5, 2.0):
            spec = build_limiting_spectrum(IDENTITY, gamma, 512)
            a, b = marchenko_pastur_edges(gamma)
            margin = 0.025 * (b - a)
            interior = (spec.grid > a + margin) & (spec.grid < b - margin)
            err = np.abs(spec.density_vals - marchenko_pastur_density(spec.grid, gamma))[interior]
            self.assertLess(err.max(), 1e-5, msg=f"gamma={gamma}")
            self.assertEqual(spec.atom0_mass, max(1 - 1 / gamma, 0.0))

    def test_normalization(self):
        spec = build_limiting_spectrum(IDENTITY, 0.5, 512)
        self.assertAlmostEqual(spec.mass(), 1.0, delta=1e-4)
        self.assertTrue(np.all(spec.g_vals >= 0))
        self.assertEqual(spec.g_vals[0], 0.0)
        self.assertEqual(spec.g_vals[-1], 0.0)

    def test_first_moment(self):
        spec = build_limiting_spectrum(TWO_MASS, 1 / 3)
        self.assertAlmostEqual(spec.first_moment(), 2.5, delta=1e-4)

    def test_overparameterized(self):
        spec = build_limiting_spectrum(IDENTITY, 2.0)
        self.assertEqual(spec.atom0_mass, 0.5)
        self.assertAlmostEqual(spec.m0, 1.0, places=10)
        self.assertGreater(spec.m0_prime, 0)
        self.assertAlmostEqual(spec.mass(), 1.0, delta=1e-4)

    def test_identity_modulus_on_grid(self):
        spec = build_limiting_spectrum(IDENTITY, 0.5)
        np.testing.assert_allclose(spec.grid * spec.modulus2, 1.0, atol=1e-6)

    def test_toeplitz_population(self):
        H = PopulationSpectrum.toeplitz_ar(0.5, 300)
        spec = build_limiting_spectrum(H, 2 / 3)
        self.assertAlmostEqual(spec.mass(), 1.0, delta=1e-4)
        self.assertAlmostEqual(spec.first_moment(), H.mean, delta=1e-4)

    def test_small_grid_rejected(self):
        with self.assertRaises(ConfigError):
            build_limiting_spectrum(IDENTITY, 0.5, 32)

    @override_lab(GRID_SIZE=128)
    def test_grid_size_from_settings(self):
        spec = build_limiting_spectrum(IDENTITY, 0.5)
        self.assertGreaterEqual(len(spec), 128)
        self.assertLess(len(spec), 512)

    def test_frame_export(self):
        frame = build_limiting_spectrum(IDENTITY, 0.5, 64).to_frame()
        self.assertEqual(list(frame.columns), ["x", "f", "g", "density"])


class NullPopulationDirectionTests(SimpleTestCase):
    """H with an atom at t = 0: Sigma has a null space of weight H({0})."""

    HALF_NULL = PopulationSpectrum(((0.0, 0.5), (1.0, 0.5)))

    def test_weights(self):
        self.assertEqual(self.HALF_NULL.null_weight, 0.5)
        self.assertTrue(self.HALF_NULL.positive_part().same_as(IDENTITY))
        with self.assertRaises(ConfigError):
            PopulationSpectrum.point_mass(0.0).positive_part()

    def test_companion_transform_drops_null_directions(self):
        z = np.array([1.0 + 1.0j, 0.3 + 0.05j, 4.0 + 0.2j])
        full = companion_transform(self.HALF_NULL, 0.5, z)
        reduced = companion_transform(IDENTITY, 0.25, z)
        np.testing.assert_allclose(full, reduced, rtol=1e-10)

    def test_mass_and_first_moment(self):
        spec = build_limiting_spectrum(self.HALF_NULL, 0.5)
        self.assertEqual(spec.atom0_mass, 0.5)
        self.assertFalse(spec.overparameterized)
        self.assertIsNone(spec.m0)
        self.assertAlmostEqual(spec.mass(), 1.0, delta=1e-4)
        self.assertAlmostEqual(spec.first_moment(), 0.5, delta=1e-4)

    def test_density_is_scaled_marchenko_pastur(self):
        spec = build_limiting_spectrum(self.HALF_NULL, 0.5, 512)
        a, b = marchenko_pastur_edges(0.25)
        self.assertAlmostEqual(spec.lower_edge, a, delta=1e-6)
        self.assertAlmostEqual(spec.upper_edge, b, delta=1e-6)
        margin = 0.025 * (b - a)
        interior = (spec.grid > a + margin) & (spec.grid < b - margin)
        expected = 0.5 * marchenko_pastur_density(spec.grid, 0.25)
        self.assertLess(np.abs(spec.density_vals - expected)[interior].max(), 1e-5)

    def test_sample_rank_limited_by_n(self):
        spec = build_limiting_spectrum(self.HALF_NULL, 3.0)
        self.assertTrue(spec.overparameterized)
        self.assertAlmostEqual(spec.atom0_mass, 2 / 3, places=12)
        m0, _ = companion_at_zero(IDENTITY, 1.5)
        self.assertAlmostEqual(spec.m0, m0, places=10)
        self.assertAlmostEqual(spec.mass(), 1.0, delta=1e-4)

    def test_sample_rank_limited_by_population(self):
        spec = build_limiting_spectrum(PopulationSpectrum(((0.0, 0.75), (1.0, 0.25))), 3.0)
        self.assertFalse(spec.overparameterized)
        self.assertEqual(spec.atom0_mass, 0.75)
        self.assertAlmostEqual(spec.mass(), 1.0, delta=1e-4)
        with self.assertRaises(DomainError):
            companion_at_zero(PopulationSpectrum(((0.0, 0.75), (1.0, 0.25))), 3.0)

    def test_critical_sample_rank_rejected(self):
        with self.assertRaises(DomainError):
            find_support(self.HALF_NULL, 2.0)
