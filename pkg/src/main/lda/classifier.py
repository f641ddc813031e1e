"""Limiting misclassification error of the shrinkage LDA rule sign(delta_hat' h(Sigma_hat) x).

Theta(h) = alpha^4 (int h dF)^2 / (alpha^2 M(h^2) + gamma T(h)) and the
error converges to Phi(-sqrt(Theta)).
"""

from __future__ import annotations

import logging

import numpy as np
import pandas as pd
from scipy.optimize import minimize_scalar
from scipy.stats import norm

from core.exceptions import ConfigError, DomainError
from functionals.models import ShrinkageFunction
from functionals.shrinkers import lp_covariance_shrinker, lp_precision_shrinker, precision_from_covariance
from functionals.trace import m_quadratic_form, mass_vector, shrinkage_vector, t_quadratic_form
from spectrum.models import LimitingSpectrum

from .models import Alpha2Estimate, LdaErrorReport, LdaModelParams
from .shrinkage import optimal_shrinkage_qp

logger = logging.getLogger(__name__)

NEGATIVE_TOL = 1e-12
RIDGE_BOUNDS = (1e-4, 1e3)
COMPARISON_COLUMNS = [
    "alpha",
    "error_optimal",
    "error_lp_cov",
    "error_lp_prec",
    "error_ridge_best",
    "error_identity",
]


def theta(params: LdaModelParams, spec: LimitingSpectrum, h: ShrinkageFunction) -> LdaErrorReport:
    params.check_spectrum(spec)
    v = shrinkage_vector(spec, h)
    if np.any(v < -NEGATIVE_TOL * max(1.0, np.abs(v).max())):
        raise DomainError(f"{h.label} takes negative values on the support")
    alpha2 = params.alpha**2
    mass = float(mass_vector(spec) @ v)
    numerator = alpha2 * alpha2 * mass * mass
    denom_M = float(alpha2 * v @ m_quadratic_form(spec) @ v)
    denom_T = float(spec.ratio * v @ t_quadratic_form(spec) @ v)
    denominator = denom_M + denom_T
    if mass == 0.0 or denominator <= 0.0:
        logger.warning("degenerate classifier for %s: error reported as 0.5", h.label)
        return LdaErrorReport(0.0, 0.5, numerator, denom_M, denom_T, degenerate=True)
    value = numerator / denominator
    return LdaErrorReport(value, float(norm.cdf(-np.sqrt(value))), numerator, denom_M, denom_T)


def estimate_alpha2(delta_hat_norm2: float, trace_sample_cov: float, n: int) -> Alpha2Estimate:
    """||delta_hat||^2 - tr(Sigma_hat) / n; negative values are clamped to 0."""
    if n < 1:
        raise ConfigError("n must be a positive count")
    raw = float(delta_hat_norm2) - float(trace_sample_cov) / n
    if raw < 0:
        logger.warning("alpha^2 estimate %.4g clamped to 0", raw)
        return Alpha2Estimate(0.0, raw, True)
    return Alpha2Estimate(raw, raw, False)


def best_ridge(params: LdaModelParams, spec: LimitingSpectrum) -> tuple[float, LdaErrorReport]:
    """Penalty of h(x) = 1/(x + lambda) with the largest Theta, bounded search over log lambda."""
    lo, hi = np.log(RIDGE_BOUNDS[0]), np.log(RIDGE_BOUNDS[1])

    def loss(log_lam):
        return -theta(params, spec, ShrinkageFunction.closed("ridge_inverse", lam=np.exp(log_lam))).theta

    result = minimize_scalar(loss, bounds=(lo, hi), method="bounded", options={"xatol": 1e-6})
    lam = float(np.exp(result.x))
    return lam, theta(params, spec, ShrinkageFunction.closed("ridge_inverse", lam=lam))


def _competitor_error(params, spec, h) -> float:
    try:
        return theta(params, spec, h).error
    except DomainError as exc:
        logger.warning("competitor skipped at alpha=%g: %s", params.alpha, exc)
        return float("nan")


def compare_shrinkers(spec: LimitingSpectrum, alphas) -> pd.DataFrame:
    """Limiting errors of the optimal, Frobenius-based, ridge and unregularized rules per alpha."""
    lp_cov = precision_from_covariance(spec, lp_covariance_shrinker(spec))
    try:
        lp_prec = lp_precision_shrinker(spec)
    except DomainError as exc:
        logger.warning("precision shrinker unavailable: %s", exc)
        lp_prec = None
    identity = ShrinkageFunction.closed("inverse")
    rows = []
    for alpha in alphas:
        params = LdaModelParams(float(alpha), spec.gamma, spec.h_ref)
        optimal = optimal_shrinkage_qp(params, spec)
        _, ridge = best_ridge(params, spec)
        rows.append(
            {
                "alpha": float(alpha),
                "error_optimal": theta(params, spec, optimal.h_opt).error,
                "error_lp_cov": _competitor_error(params, spec, lp_cov),
                "error_lp_prec": float("nan") if lp_prec is None else _competitor_error(params, spec, lp_prec),
                "error_ridge_best": ridge.error,
                "error_identity": _competitor_error(params, spec, identity),
            }
        )
    logger.info("compared shrinkers at %d alpha values", len(rows))
    return pd.DataFrame(rows, columns=COMPARISON_COLUMNS)
