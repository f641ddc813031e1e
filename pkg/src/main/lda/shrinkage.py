"""Optimal shrinkage for the LDA precision estimate and for the class mean.

For h normalized to int h dF = 1, maximizing Theta(h) is the same as
minimizing s M(h^2) + T(h) with s = alpha^2 / gamma. Both M(h^2) and T(h)
are quadratic in the grid values of h, so the discretized program is a
convex QP over {v >= 0, a'v = 1} with a the mass vector of F.

Contains:
- optimal_shrinkage_qp: the QP solved on the spectrum grid
- relaxed_optimum: T(h) replaced by its lower bound M(h)^2, solved in closed form
- mean_shrinker, mean_shrinker_loss: the optimal shrinkage of the class-mean estimate
"""

from __future__ import annotations

import logging

import numpy as np

from core.exceptions import ConfigError, DomainError
from functionals.models import ShrinkageFunction
from functionals.trace import (
    m_functional,
    m_quadratic_form,
    m_weights,
    mass_vector,
    shrinkage_vector,
    t_quadratic_form,
)
from spectrum.builder import build_limiting_spectrum
from spectrum.models import LimitingSpectrum

from .models import LdaModelParams, QpSolution, RelaxationFit
from .qp import solve_simplex_qp

logger = logging.getLogger(__name__)

MIN_QP_GRID = 32


def _free_variables(spec: LimitingSpectrum) -> np.ndarray:
    """Indices of the vector v with positive F-mass; edge nodes carry none."""
    a = mass_vector(spec)
    return np.flatnonzero(a > 0)


def _to_shrinkage(spec: LimitingSpectrum, free: np.ndarray, solution: np.ndarray) -> ShrinkageFunction:
    """Scatter the QP solution back onto the grid; massless nodes copy a neighbour."""
    n = spec.grid.size
    full = np.full(n + (1 if spec.overparameterized else 0), np.nan)
    full[free] = solution
    on_grid = full[:n]
    index = spec.interval_index
    for i in np.flatnonzero(np.isnan(on_grid)):
        opens_interval = i == 0 or index[i - 1] != index[i]
        on_grid[i] = on_grid[i + 1] if opens_interval else on_grid[i - 1]
    at_zero = full[n] if spec.overparameterized else on_grid[0]
    return ShrinkageFunction.from_grid(spec.grid, on_grid, float(at_zero))


def _program(params: LdaModelParams, spec: LimitingSpectrum, relaxed: bool) -> np.ndarray:
    if relaxed:
        mu = m_weights(spec)
        return params.s * m_quadratic_form(spec) + np.outer(mu, mu)
    return params.s * m_quadratic_form(spec) + t_quadratic_form(spec)


def optimal_shrinkage_qp(params: LdaModelParams, spec: LimitingSpectrum, grid_size: int | None = None) -> QpSolution:
    """Piecewise-constant h maximizing Theta, normalized to int h dF = 1.

    With ``grid_size`` the program is solved on a freshly built spectrum of
    that size (at least 64 nodes are always used); otherwise on ``spec``.
    """
    params.check_spectrum(spec)
    if grid_size is not None:
        if grid_size < MIN_QP_GRID:
            raise ConfigError(f"grid_size must be at least {MIN_QP_GRID}")
        spec = build_limiting_spectrum(spec.h_ref, spec.gamma, max(int(grid_size), 64))
    free = _free_variables(spec)
    P = _program(params, spec, relaxed=False)[np.ix_(free, free)]
    result = solve_simplex_qp(P, mass_vector(spec)[free])
    h = _to_shrinkage(spec, free, result.v)
    bound_active = bool(np.any(result.v <= 0))
    logger.info(
        "optimal shrinkage at s=%.4g: objective %.6g, residual %.2e, bound %s",
        params.s,
        result.objective,
        result.kkt_residual,
        "active" if bound_active else "inactive",
    )
    return QpSolution(h, result.objective, result.kkt_residual, result.psd_floor, bound_active)


def relaxed_objective(params: LdaModelParams, spec: LimitingSpectrum, h: ShrinkageFunction) -> float:
    """s M(h^2) + M(h)^2, a lower bound on s M(h^2) + T(h)."""
    v = shrinkage_vector(spec, h)
    return float(params.s * v @ m_quadratic_form(spec) @ v + m_functional(spec, h).value ** 2)


def relaxed_optimum(params: LdaModelParams, spec: LimitingSpectrum) -> QpSolution:
    """h = A x |m|^2 - B minimizing the relaxed objective under int h dF = 1.

    Stationarity fixes the shape x |m|^2 - B with B = M(x|m|^2) / (s + M(1));
    A is chosen to normalize. The relaxed program is also solved
    numerically with h >= 0 and the residual of its best fit in that family
    is reported. Where the affine shape turns negative on the support of F
    it is infeasible, and the numeric optimum is returned instead with
    ``bound_active`` set.
    """
    params.check_spectrum(spec)
    if spec.overparameterized:
        raise DomainError("the relaxed optimum is derived for gamma < 1")
    reciprocal = spec.grid * spec.modulus2
    mu = m_weights(spec)
    shape_b = float(np.dot(mu, reciprocal)) / (params.s + float(mu.sum()))
    shape = reciprocal - shape_b
    scale = 1.0 / spec.expect(shape)

    free = _free_variables(spec)
    P = _program(params, spec, relaxed=True)[np.ix_(free, free)]
    a = mass_vector(spec)
    result = solve_simplex_qp(P, a[free])
    numeric = np.zeros(spec.grid.size)
    numeric[free] = result.v
    # weighted least squares of the numeric optimum on (x|m|^2, 1) in L2(F)
    weights = np.sqrt(a)
    design = np.column_stack((reciprocal, -np.ones_like(reciprocal))) * weights[:, None]
    coeffs, *_ = np.linalg.lstsq(design, numeric * weights, rcond=None)
    residual = float(np.linalg.norm(design @ coeffs - numeric * weights))
    fit = RelaxationFit(A=scale, B=scale * shape_b, residual=residual)
    bound_active = bool(np.any(shape[free] < 0))
    if bound_active:
        logger.info("affine relaxed optimum is negative on the support, using the numeric optimum")
        h = _to_shrinkage(spec, free, result.v)
    else:
        h = ShrinkageFunction.from_grid(spec.grid, scale * shape, scale * float(shape[0]))
    logger.debug("relaxed optimum: A=%.6g B=%.6g, numeric fit residual %.2e", fit.A, fit.B, residual)
    return QpSolution(
        h,
        relaxed_objective(params, spec, h),
        result.kkt_residual,
        result.psd_floor,
        bound_active,
        fit,
    )


def mean_shrinker(params: LdaModelParams, spec: LimitingSpectrum) -> ShrinkageFunction:
    """r(x) = s / (s + 1/(x |m|^2)), with 1/((gamma - 1) m_(0)) in place of 1/(x|m|^2) at 0."""
    s = params.s
    values = s / (s + 1.0 / (spec.grid * spec.modulus2))
    if spec.overparameterized:
        at_zero = s / (s + 1.0 / ((spec.ratio - 1.0) * spec.m0))
    else:
        at_zero = float(values[0])
    return ShrinkageFunction.from_grid(spec.grid, values, at_zero)


def mean_shrinker_loss(params: LdaModelParams, spec: LimitingSpectrum, r: ShrinkageFunction) -> float:
    """Limit of ||r(Sigma_hat) delta_hat - delta||^2: gamma M(r^2) + alpha^2 int (r - 1)^2 dF."""
    v = shrinkage_vector(spec, r)
    values = r.on_grid(spec.grid)
    gap = spec.expect((values - 1.0) ** 2, at_zero=(r.value_at_zero() - 1.0) ** 2)
    return float(spec.ratio * v @ m_quadratic_form(spec) @ v + params.alpha**2 * gap)
