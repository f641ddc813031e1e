"""Spectrum-dependent shrinkage functions.

Contains:
- lp_covariance_shrinker: Frobenius-optimal covariance shrinker 1 / (x |m|^2)
- lp_precision_shrinker: (gamma - 1 - 2 x f) / x
- precision_from_covariance: reciprocal of a covariance shrinker
- resolve_shrinker: build any ShrinkageFunction from its JSON payload
"""

from __future__ import annotations

import numpy as np

from core.conf import lab_setting
from core.exceptions import ConfigError, DomainError, EvaluationError
from spectrum.models import LimitingSpectrum

from .models import SPECTRAL_FAMILIES, ShrinkageFunction


def lp_covariance_shrinker(spec: LimitingSpectrum) -> ShrinkageFunction:
    """h(x) = 1 / (x (f^2 + g^2)); h(0) = 1 / ((gamma - 1) m_(0)) for gamma > 1.

    Below the support (gamma < 1) the value at 0 is the lower-edge value,
    the same constant extension grid functions use.
    """
    values = 1.0 / (spec.grid * spec.modulus2)
    if spec.overparameterized:
        at_zero = 1.0 / ((spec.ratio - 1.0) * spec.m0)
    else:
        at_zero = float(values[0])
    return ShrinkageFunction.from_grid(spec.grid, values, at_zero)


def lp_precision_shrinker(spec: LimitingSpectrum) -> ShrinkageFunction:
    """h(x) = (gamma - 1 - 2 x f(x)) / x, for supports bounded away from 0."""
    tol = lab_setting("SUPPORT_TOL")
    if spec.atom0_mass > 0 or spec.lower_edge <= tol * spec.width:
        raise DomainError("the precision shrinker needs a spectrum bounded away from 0")
    values = (spec.ratio - 1.0 - 2.0 * spec.grid * spec.f_vals) / spec.grid
    return ShrinkageFunction.from_grid(spec.grid, values, float(values[0]))


def precision_from_covariance(spec: LimitingSpectrum, h: ShrinkageFunction) -> ShrinkageFunction:
    """1 / h on the grid: the precision plug-in of a covariance estimator."""
    values = h.on_grid(spec.grid)
    if np.any(values <= 0):
        raise EvaluationError("covariance shrinker must be positive to invert")
    h0 = h.value_at_zero()
    inverse = 1.0 / values
    return ShrinkageFunction.from_grid(spec.grid, inverse, 1.0 / h0 if h0 > 0 else float(inverse[0]))


def resolve_shrinker(payload, spec: LimitingSpectrum | None = None) -> ShrinkageFunction:
    """Closed-form, grid and spectrum-dependent families from one JSON object."""
    if isinstance(payload, ShrinkageFunction):
        return payload
    family = payload.get("family") if isinstance(payload, dict) else None
    if family not in SPECTRAL_FAMILIES:
        return ShrinkageFunction.from_json(payload, grid=None if spec is None else spec.grid)
    if spec is None:
        raise ConfigError(f"family {family!r} needs a solved spectrum")
    if family == "lp_covariance":
        return lp_covariance_shrinker(spec)
    if family == "lp_precision":
        return lp_precision_shrinker(spec)
    from lda.models import LdaModelParams
    from lda.shrinkage import mean_shrinker

    if "alpha" not in payload:
        raise ConfigError("mean_shrinker needs alpha")
    params = LdaModelParams(alpha=payload["alpha"], gamma=spec.gamma, H=spec.h_ref)
    return mean_shrinker(params, spec)
