"""Assembly of LimitingSpectrum objects and real-axis boundary values."""

from __future__ import annotations

import logging

import numpy as np

from core.conf import lab_setting
from core.exceptions import ConfigError, DomainError, NumericalError

from .models import AspectRatio, LimitingSpectrum, PopulationSpectrum
from .quadrature import interval_rule
from .solver import boundary_limit
from .support import SupportInterval, companion_at_zero, find_support

logger = logging.getLogger(__name__)

MIN_GRID = 64


def _edge_value(intervals, x: float, tol: float):
    for iv in intervals:
        slack = tol * iv.width
        if abs(x - iv.lower) <= slack:
            return iv.m_lower
        if abs(x - iv.upper) <= slack:
            return iv.m_upper
    return None


def boundary_values(H: PopulationSpectrum, gamma, x, intervals=None):
    """(f(x), g(x)) = lim_{eps -> 0} m_(x + i eps) for x in the support.

    Points within SUPPORT_TOL * width of an edge get the critical value of
    the inverse map and g = 0. Accepts scalars or arrays.
    """
    gamma = AspectRatio.coerce(gamma)
    if intervals is None:
        intervals = find_support(H, gamma)
    tol = lab_setting("SUPPORT_TOL")
    xs = np.atleast_1d(np.asarray(x, dtype=np.float64))
    inside = np.zeros(xs.shape, dtype=bool)
    for iv in intervals:
        slack = tol * iv.width
        inside |= (xs >= iv.lower - slack) & (xs <= iv.upper + slack)
    if not inside.all():
        bad = xs[~inside][0]
        raise DomainError(f"x={bad} lies outside the limiting support")
    f = np.empty(xs.shape)
    g = np.empty(xs.shape)
    edge = np.zeros(xs.shape, dtype=bool)
    for i, value in enumerate(xs):
        crit = _edge_value(intervals, float(value), tol)
        if crit is not None:
            f[i], g[i], edge[i] = crit, 0.0, True
    if (~edge).any():
        m, _ = boundary_limit(H, gamma, xs[~edge])
        f[~edge] = m.real
        g[~edge] = np.maximum(m.imag, 0.0)
    if np.ndim(x):
        return f, g
    return float(f[0]), float(g[0])


def _allocate(intervals: tuple[SupportInterval, ...], grid_size: int) -> list[int]:
    """Even, multiple-of-four rule orders per interval, part equal and part by width."""
    total = sum(iv.width for iv in intervals)
    k = len(intervals)
    orders = []
    for iv in intervals:
        share = 0.5 * grid_size / k + 0.5 * grid_size * iv.width / total
        n = max(32, int(np.ceil(share)))
        orders.append(4 * int(np.ceil(n / 4)))
    return orders


def build_limiting_spectrum(
    H: PopulationSpectrum, gamma, grid_size: int | None = None
) -> LimitingSpectrum:
    """Solve (gamma, H) on a Chebyshev-clustered grid and check the result.

    Raises ConfigError for a grid below 64 nodes and NumericalError when
    the mass or first moment of the solved spectrum is off by more than
    MASS_TOL.
    """
    gamma = AspectRatio.coerce(gamma)
    grid_size = int(grid_size or lab_setting("GRID_SIZE"))
    if grid_size < MIN_GRID:
        raise ConfigError(f"grid_size must be at least {MIN_GRID}")
    intervals = find_support(H, gamma)
    nodes, weights, coarse, index, edge = [], [], [], [], []
    f_parts, g_parts = [], []
    for i, (iv, order) in enumerate(zip(intervals, _allocate(intervals, grid_size))):
        x, w, wc = interval_rule(iv.lower, iv.upper, order)
        m, _ = boundary_limit(H, gamma, x[1:-1])
        f_parts.append(np.concatenate(([iv.m_lower], m.real, [iv.m_upper])))
        g_parts.append(np.concatenate(([0.0], np.maximum(m.imag, 0.0), [0.0])))
        mask = np.zeros(x.size, dtype=bool)
        mask[[0, -1]] = True
        nodes.append(x)
        weights.append(w)
        coarse.append(wc)
        index.append(np.full(x.size, i))
        edge.append(mask)

    g_vals = np.concatenate(g_parts)
    m0 = m0_prime = None
    if gamma.gamma * (1.0 - H.null_weight) > 1.0:
        m0, m0_prime = companion_at_zero(H, gamma)
    spec = LimitingSpectrum(
        gamma=gamma,
        h_ref=H,
        support=tuple(iv.as_pair() for iv in intervals),
        grid=np.concatenate(nodes),
        f_vals=np.concatenate(f_parts),
        g_vals=g_vals,
        density_vals=g_vals / (gamma.gamma * np.pi),
        weights=np.concatenate(weights),
        coarse_weights=np.concatenate(coarse),
        interval_index=np.concatenate(index),
        atom0_mass=max(1.0 - 1.0 / gamma.gamma, H.null_weight, 0.0),
        m0=m0,
        m0_prime=m0_prime,
        edge_mask=np.concatenate(edge),
    )
    _check_invariants(spec)
    logger.info(
        "limiting spectrum: gamma=%.4g, %d interval(s), %d nodes, mass %.8f",
        gamma.gamma,
        len(intervals),
        len(spec),
        spec.mass(),
    )
    return spec


def _check_invariants(spec: LimitingSpectrum) -> None:
    tol = lab_setting("MASS_TOL")
    mass = spec.mass()
    if abs(mass - 1.0) > tol:
        raise NumericalError(f"limiting spectrum mass {mass:.6f} differs from 1")
    mean = spec.h_ref.mean
    first = spec.first_moment()
    if abs(first - mean) > tol * max(1.0, mean):
        raise NumericalError(f"first moment {first:.6f} differs from int t dH = {mean:.6f}")
    if spec.overparameterized and not (spec.m0 > 0 and spec.m0_prime > 0):
        raise NumericalError("m_(0) and m_'(0) must be positive for gamma > 1")
