"""Limiting test risk and training error of spectral shrinkage regression.

The estimator is w_hat = sum_i h(lambda_i) u_i v_i' y / sqrt(n). With
mu(dx) = g / (gamma pi x |m|^2) dx on the support, its limiting risk is

    1 + int [alpha^2 (sqrt(x) h - 1)^2 + gamma h^2] dmu
      + (alpha^2 + gamma h(0)^2) / (gamma m_(0))   [gamma > 1]

Contains:
- predicted_test_risk, training_error and the gradient-flow learning curves
- closed_form_identity_curve: the same curve for Sigma = I from the closed-form density
- check_overregularized_monotone, risk_surface, optimal_stopping_time,
  early_stopping_comparison
"""

from __future__ import annotations

import logging

import numpy as np
import pandas as pd
from scipy.integrate import quad
from scipy.optimize import minimize_scalar

from core.conf import lab_setting
from core.exceptions import ConfigError, PreconditionError
from functionals.models import ShrinkageFunction
from spectrum.closed_form import marchenko_pastur_density, marchenko_pastur_edges
from spectrum.models import AspectRatio, LimitingSpectrum

from .models import LearningCurve, RegressionModelParams, RiskReport

logger = logging.getLogger(__name__)

MONOTONE_TOL = 1e-8


def default_times() -> np.ndarray:
    return np.geomspace(lab_setting("TIME_MIN"), lab_setting("TIME_MAX"), lab_setting("TIME_POINTS"))


def gd_shrinkage(t: float, lam: float) -> ShrinkageFunction:
    """h(x; t, lambda) = (1 - exp(-t (x + lambda))) sqrt(x) / (x + lambda), h(0) = 0."""
    return ShrinkageFunction.closed("gradient_flow", t=t, lam=lam)


def ridge_shrinkage(lam: float) -> ShrinkageFunction:
    return ShrinkageFunction.closed("ridge", lam=lam)


def _risk_measure(spec: LimitingSpectrum) -> np.ndarray:
    return spec.weights * spec.g_vals / (spec.ratio * np.pi * spec.grid * spec.modulus2)


def predicted_test_risk(
    params: RegressionModelParams, spec: LimitingSpectrum, h: ShrinkageFunction
) -> RiskReport:
    params.check_spectrum(spec)
    gamma, alpha2 = spec.ratio, params.alpha2
    x = spec.grid
    values = h.on_grid(x)
    mu = _risk_measure(spec)
    bias = float(np.dot(mu, alpha2 * (np.sqrt(x) * values - 1.0) ** 2))
    variance = float(np.dot(mu, gamma * values**2))
    atom = 0.0
    if spec.overparameterized:
        h0 = h.value_at_zero()
        atom = (alpha2 + gamma * h0 * h0) / (gamma * spec.m0)
    return RiskReport(1.0 + bias + variance + atom, bias, variance, atom)


def training_error(params: RegressionModelParams, spec: LimitingSpectrum, h: ShrinkageFunction) -> float:
    """int (sqrt(x) h - 1)^2 dF_ + alpha^2 int x (sqrt(x) h - 1)^2 dF.

    F_ is the companion measure: gamma times the continuous part of F plus
    an atom of mass 1 - gamma + gamma F({0}) at 0, where the residual is -1.
    """
    params.check_spectrum(spec)
    x = spec.grid
    residual = np.sqrt(x) * h.on_grid(x) - 1.0
    companion = spec.ratio * spec.integrate(residual**2 * spec.density_vals)
    companion += max(1.0 - spec.ratio + spec.ratio * spec.atom0_mass, 0.0)
    signal = params.alpha2 * spec.integrate(x * residual**2 * spec.density_vals)
    return companion + signal


def train_error(params: RegressionModelParams, spec: LimitingSpectrum, lam: float, t: float) -> float:
    return training_error(params, spec, gd_shrinkage(t, lam))


def final_train_error(params: RegressionModelParams, spec: LimitingSpectrum, lam: float) -> float:
    """Training error of the fully trained model, i.e. of ridge(lambda)."""
    return training_error(params, spec, ridge_shrinkage(lam))


def _check_times(times) -> np.ndarray:
    times = np.asarray(times, dtype=np.float64)
    if times.ndim != 1 or times.size == 0 or np.any(times < 0) or np.any(np.diff(times) <= 0):
        raise ConfigError("times must be a non-empty increasing sequence of nonnegative numbers")
    return times


def learning_curve(params: RegressionModelParams, spec: LimitingSpectrum, lam: float, times=None) -> LearningCurve:
    """Predicted test risk and training error of gradient flow at each time."""
    times = _check_times(default_times() if times is None else times)
    risk = np.empty(times.size)
    train = np.empty(times.size)
    for i, t in enumerate(times):
        h = gd_shrinkage(t, lam)
        risk[i] = predicted_test_risk(params, spec, h).test_risk
        train[i] = training_error(params, spec, h)
    logger.debug("learning curve at lambda=%g over %d times", lam, times.size)
    return LearningCurve(lam, times, risk, train)


def closed_form_identity_curve(alpha: float, gamma, times=None) -> LearningCurve:
    """Unregularized gradient flow for Sigma = I from the closed-form density.

    Test risk 1 + int alpha^2 e^{-2tx} + gamma (1 - e^{-tx})^2 / x dF; the
    atom of F at 0 (gamma > 1) contributes alpha^2 (1 - 1/gamma).
    """
    gamma = float(AspectRatio.coerce(gamma))
    alpha2 = float(alpha) ** 2
    times = _check_times(default_times() if times is None else times)
    a, b = marchenko_pastur_edges(gamma)
    atom = max(1.0 - 1.0 / gamma, 0.0)

    def density(x):
        return float(marchenko_pastur_density(np.array([x]), gamma)[0])

    def integral(fn):
        value, _ = quad(lambda x: fn(x) * density(x), a, b, limit=200, epsabs=1e-12, epsrel=1e-10)
        return value

    risk = np.empty(times.size)
    train = np.empty(times.size)
    for i, t in enumerate(times):
        risk[i] = 1.0 + alpha2 * atom + integral(
            lambda x: alpha2 * np.exp(-2.0 * t * x) + gamma * np.expm1(-t * x) ** 2 / x
        )
        # the residual sqrt(x) h - 1 is -e^{-tx}
        train[i] = gamma * integral(lambda x: np.exp(-2.0 * t * x)) + max(1.0 - gamma, 0.0)
        train[i] += alpha2 * integral(lambda x: x * np.exp(-2.0 * t * x))
    return LearningCurve(0.0, times, risk, train)


def check_overregularized_monotone(
    params: RegressionModelParams,
    spec: LimitingSpectrum,
    lam: float,
    times=None,
    diagnostic: bool = False,
) -> tuple[bool, float]:
    """Whether the ridge gradient-flow risk is non-increasing along ``times``.

    Only claimed for lambda >= gamma / alpha^2; below that PreconditionError
    is raised unless ``diagnostic`` is set. Returns the flag and the largest
    increase between consecutive times.
    """
    if lam < params.optimal_lambda and not diagnostic:
        raise PreconditionError(
            f"lambda={lam:g} is below gamma/alpha^2={params.optimal_lambda:g}; monotonicity is not claimed"
        )
    curve = learning_curve(params, spec, lam, times)
    increase = float(max(np.diff(curve.test_risk).max(initial=0.0), 0.0))
    return increase <= MONOTONE_TOL, increase


def risk_surface(params: RegressionModelParams, spec: LimitingSpectrum, lambdas, times=None) -> pd.DataFrame:
    rows = []
    for lam in lambdas:
        curve = learning_curve(params, spec, float(lam), times)
        rows.append(pd.DataFrame({"t": curve.times, "lambda": float(lam), "risk": curve.test_risk}))
    return pd.concat(rows, ignore_index=True)


def optimal_stopping_time(
    params: RegressionModelParams, spec: LimitingSpectrum, lam: float
) -> tuple[float, float]:
    """Bounded search over log t on [TIME_MIN, TIME_MAX]; returns (t, risk)."""
    lo, hi = np.log(lab_setting("TIME_MIN")), np.log(lab_setting("TIME_MAX"))

    def risk_at(log_t):
        return predicted_test_risk(params, spec, gd_shrinkage(np.exp(log_t), lam)).test_risk

    result = minimize_scalar(risk_at, bounds=(lo, hi), method="bounded", options={"xatol": 1e-6})
    candidates = [(result.fun, result.x), (risk_at(lo), lo), (risk_at(hi), hi)]
    risk, log_t = min(candidates)
    return float(np.exp(log_t)), float(risk)


def early_stopping_comparison(params: RegressionModelParams, spec: LimitingSpectrum, lambdas) -> pd.DataFrame:
    """Fully trained (ridge) risk against the risk at the best stopping time."""
    rows = []
    for lam in lambdas:
        lam = float(lam)
        full = predicted_test_risk(params, spec, ridge_shrinkage(lam)).test_risk
        t_best, early = optimal_stopping_time(params, spec, lam)
        rows.append(
            {"lambda": lam, "fully_trained_risk": full, "early_stopped_risk": early, "optimal_time": t_best}
        )
    logger.info("early stopping compared at %d penalties", len(rows))
    return pd.DataFrame(rows, columns=["lambda", "fully_trained_risk", "early_stopped_risk", "optimal_time"])
