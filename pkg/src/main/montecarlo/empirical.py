"""Finite-sample counterparts of the limiting quantities.

Contains:
- empirical_regression_risk / empirical_regression_curve: exact conditional
  test risk and training error of w_hat = sum h(lambda_i) u_i v_i' y / sqrt(n)
- empirical_frobenius_loss and the trace functionals p^-1 tr(Sigma h(S)),
  p^-1 tr(Sigma h(S) Sigma h(S)), the two-resolvent trace and the Stieltjes transform
- empirical_lda_error / sampled_lda_error and estimate_draw_alpha2
- empirical_mean_shrinker_loss: squared error of the shrunk mean difference
- kernel_estimate_fg: Epanechnikov estimates of f and g from sample eigenvalues
"""

from __future__ import annotations

import logging

import numpy as np
from scipy.special import xlogy
from scipy.stats import norm

from core.exceptions import ConfigError, SampleSizeError
from functionals.models import ShrinkageFunction
from lda.classifier import estimate_alpha2
from lda.models import Alpha2Estimate

from .models import CovarianceModel, EmpiricalSpectrumEstimate, SimulationDraw

logger = logging.getLogger(__name__)

MIN_EIGENVALUES = 100
DEFAULT_ESTIMATE_POINTS = 256
SAMPLE_CHUNK = 8192


def _coefficients(draw: SimulationDraw, h: ShrinkageFunction) -> np.ndarray:
    """w_hat for one shrinkage function; h acts on the nonzero sample eigenvalues only."""
    weights = h(draw.eigenvalues)
    projected = draw.Vt @ draw.y / np.sqrt(draw.n)
    return draw.U @ (weights * projected)


def empirical_regression_risk(
    draw: SimulationDraw, h: ShrinkageFunction, covariance: CovarianceModel
) -> tuple[float, float]:
    """(1 + (w_hat - w)' Sigma (w_hat - w), ||y - X' w_hat||^2 / n)."""
    w_hat = _coefficients(draw, h)
    error = w_hat - draw.w
    test_risk = 1.0 + covariance.quadratic(error)
    residual = draw.y - draw.X.T @ w_hat
    return test_risk, float(residual @ residual / draw.n)


def empirical_regression_curve(draw: SimulationDraw, shrinkers, covariance: CovarianceModel) -> np.ndarray:
    """Rows of (test_risk, train_error), one per shrinkage function, sharing one SVD."""
    return np.array([empirical_regression_risk(draw, h, covariance) for h in shrinkers])


def _spectral_matrix(draw: SimulationDraw, values: np.ndarray, at_zero) -> np.ndarray:
    """U diag(values) U' + at_zero (I - U U') as a dense p x p matrix."""
    matrix = (draw.U * (values - at_zero)) @ draw.U.T
    matrix[np.diag_indices_from(matrix)] += at_zero
    return matrix


def shrunk_covariance(draw: SimulationDraw, h: ShrinkageFunction) -> np.ndarray:
    return _spectral_matrix(draw, h(draw.eigenvalues), h.value_at_zero())


def empirical_trace_m(draw: SimulationDraw, h: ShrinkageFunction, covariance: CovarianceModel) -> float:
    """p^-1 tr(Sigma h(S_n))."""
    return float(np.trace(covariance.apply(shrunk_covariance(draw, h))) / draw.p)


def empirical_trace_t(draw: SimulationDraw, h: ShrinkageFunction, covariance: CovarianceModel) -> float:
    """p^-1 tr(Sigma h(S_n) Sigma h(S_n))."""
    product = covariance.apply(shrunk_covariance(draw, h))
    return float(np.sum(product * product.T) / draw.p)


def empirical_two_resolvent_trace(draw: SimulationDraw, z1: complex, z2: complex, covariance: CovarianceModel) -> complex:
    """p^-1 tr(Sigma (S_n - z1)^-1 Sigma (S_n - z2)^-1)."""
    first = covariance.apply(_spectral_matrix(draw, 1.0 / (draw.eigenvalues - z1), -1.0 / z1))
    second = covariance.apply(_spectral_matrix(draw, 1.0 / (draw.eigenvalues - z2), -1.0 / z2))
    return complex(np.sum(first * second.T) / draw.p)


def empirical_stieltjes(draw: SimulationDraw, z: complex) -> complex:
    """p^-1 tr((S_n - z)^-1), zero eigenvalues included."""
    bulk = np.sum(1.0 / (draw.eigenvalues - z))
    return complex((bulk - draw.null_dimension / z) / draw.p)


def empirical_frobenius_loss(draw: SimulationDraw, h: ShrinkageFunction, covariance: CovarianceModel) -> float:
    """p^-1 ||Sigma - h(S_n)||_F^2."""
    difference = covariance.matrix() - shrunk_covariance(draw, h)
    return float(np.sum(difference * difference) / draw.p)


def _lda_direction(draw: SimulationDraw, h: ShrinkageFunction) -> np.ndarray:
    """h(Sigma_hat) delta_hat."""
    coords = draw.U.T @ draw.delta_hat
    h0 = h.value_at_zero()
    return draw.U @ ((h(draw.eigenvalues) - h0) * coords) + h0 * draw.delta_hat


def empirical_lda_error(
    draw: SimulationDraw, h: ShrinkageFunction, covariance: CovarianceModel
) -> tuple[float, bool]:
    """Phi(-delta_hat' h(Sigma_hat) delta / ||Sigma^{1/2} h(Sigma_hat) delta_hat||) and a degenerate flag."""
    direction = _lda_direction(draw, h)
    spread = covariance.quadratic(direction)
    if spread <= 0:
        logger.warning("degenerate classifier in replicate %d", draw.replicate)
        return 0.5, True
    return float(norm.cdf(-(direction @ draw.delta) / np.sqrt(spread))), False


def sampled_lda_error(
    draw: SimulationDraw,
    h: ShrinkageFunction,
    covariance: CovarianceModel,
    n_test: int,
    rng: np.random.Generator,
) -> float:
    """Misclassification fraction of sign(delta_hat' h(Sigma_hat) x) over fresh test points."""
    if n_test < 2:
        raise ConfigError("n_test must be at least 2")
    direction = _lda_direction(draw, h)
    wrong = 0
    for start in range(0, n_test, SAMPLE_CHUNK):
        size = min(SAMPLE_CHUNK, n_test - start)
        labels = np.where(rng.random(size) < 0.5, 1.0, -1.0)
        points = covariance.apply_sqrt(rng.standard_normal((draw.p, size))) + np.outer(draw.delta, labels)
        wrong += int(np.count_nonzero(np.sign(direction @ points) != labels))
    return wrong / n_test


def empirical_mean_shrinker_loss(draw: SimulationDraw, r: ShrinkageFunction) -> float:
    """||r(Sigma_hat) delta_hat - delta||^2; r = 1 gives the plain mean difference."""
    miss = _lda_direction(draw, r) - draw.delta
    return float(miss @ miss)


def estimate_draw_alpha2(draw: SimulationDraw) -> Alpha2Estimate:
    return estimate_alpha2(float(draw.delta_hat @ draw.delta_hat), draw.sample_trace, draw.n)


def _epanechnikov(c):
    return np.where(np.abs(c) < 1.0, 0.75 * (1.0 - c * c), 0.0)


def _epanechnikov_hilbert(c):
    """Principal value of int K(u) / (u - c) du for the Epanechnikov kernel K."""
    weight = 1.0 - c * c
    return 0.75 * (xlogy(weight, np.abs(1.0 - c)) - xlogy(weight, np.abs(1.0 + c)) - 2.0 * c)


def kernel_estimate_fg(
    eigenvalues, gamma: float, bandwidth: float | None = None, x=None, p: int | None = None
) -> EmpiricalSpectrumEstimate:
    """Kernel estimates of g = gamma pi density and f = Re m_ on the real axis.

    ``eigenvalues`` are the nonzero sample eigenvalues; ``p`` (default:
    their count) normalizes the density so zero eigenvalues keep their
    mass at 0. The default bandwidth is IQR * N^(-1/3).
    """
    values = np.sort(np.asarray(eigenvalues, dtype=np.float64))
    if values.size < MIN_EIGENVALUES:
        raise SampleSizeError(f"kernel estimation needs at least {MIN_EIGENVALUES} eigenvalues, got {values.size}")
    total = values.size if p is None else int(p)
    if bandwidth is None:
        q75, q25 = np.percentile(values, [75, 25])
        bandwidth = (q75 - q25) * values.size ** (-1.0 / 3.0)
    if not bandwidth > 0:
        raise ConfigError("bandwidth must be positive")
    if x is None:
        x = np.linspace(values[0], values[-1], DEFAULT_ESTIMATE_POINTS)
    x = np.asarray(x, dtype=np.float64)
    c = (x[:, None] - values[None, :]) / bandwidth
    density = _epanechnikov(c).sum(axis=1) / (total * bandwidth)
    principal = _epanechnikov_hilbert(c).sum(axis=1) / (total * bandwidth)
    gamma = float(gamma)
    with np.errstate(divide="ignore"):
        f_hat = gamma * principal - max(1.0 - gamma, 0.0) / x
    logger.debug("kernel estimate from %d eigenvalues, bandwidth %.4g", values.size, bandwidth)
    return EmpiricalSpectrumEstimate(x, f_hat, gamma * np.pi * density, float(bandwidth))
