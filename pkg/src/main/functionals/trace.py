"""Limiting trace functionals of shrinkage functions.

For a solved spectrum with boundary values f + i g and |m|^2 = f^2 + g^2:

    M(h) = lim p^-1 tr(Sigma h(S_n))
         = int h g / (gamma pi x |m|^2) dx + h(0) / (gamma m_(0)) [gamma > 1]

    T(h) = lim p^-1 tr(Sigma h(S_n) Sigma h(S_n))
         = int h^2 g / (gamma pi x^2 |m|^4) dx + int int K(x, y) h(x) h(y) dx dy
           + [gamma > 1] terms in h(0)

Both are quadratic (M(h^2) and T(h)) or linear (M(h)) in the vector
v = (h at the grid nodes, h(0) when gamma > 1), so everything is assembled
as weight vectors and matrices over that vector.

Contains:
- m_functional, t_functional, t_bilinear
- kernel_K: the kernel of the double integral
- m_quadratic_form, t_quadratic_form, mass_vector
- two_resolvent_limit: lim p^-1 tr(Sigma (S_n - z1)^-1 Sigma (S_n - z2)^-1)
- asymptotic_frobenius_loss: lim p^-1 ||Sigma - h(S_n)||_F^2
"""

from __future__ import annotations

import logging
from functools import lru_cache

import numpy as np
from numpy.typing import NDArray

from core.exceptions import DomainError
from spectrum.builder import boundary_values
from spectrum.models import LimitingSpectrum
from spectrum.solver import boundary_limit, companion_derivative, companion_transform

from .models import FunctionalValue, ShrinkageFunction

logger = logging.getLogger(__name__)

COINCIDENT_TOL = 1e-8
DIAGONAL_STEP = 1e-5


def shrinkage_vector(spec: LimitingSpectrum, h: ShrinkageFunction) -> NDArray[np.float64]:
    """v = (h(x_j))_j followed by h(0) when the spectrum is overparameterized."""
    values = h.on_grid(spec.grid)
    if spec.overparameterized:
        return np.append(values, h.value_at_zero())
    return np.asarray(values, dtype=np.float64)


def m_weights(spec: LimitingSpectrum, coarse: bool = False) -> NDArray[np.float64]:
    w = spec.coarse_weights if coarse else spec.weights
    bulk = w * spec.g_vals / (spec.ratio * np.pi * spec.grid * spec.modulus2)
    if spec.overparameterized:
        return np.append(bulk, 1.0 / (spec.ratio * spec.m0))
    return bulk


def mass_vector(spec: LimitingSpectrum, coarse: bool = False) -> NDArray[np.float64]:
    """a with int h dF = a . v (the atom at 0 included whenever v carries h(0))."""
    w = spec.coarse_weights if coarse else spec.weights
    bulk = w * spec.density_vals
    if spec.overparameterized:
        return np.append(bulk, spec.atom0_mass)
    return bulk


def m_quadratic_form(spec: LimitingSpectrum, coarse: bool = False) -> NDArray[np.float64]:
    """Diagonal matrix Q with M(h^2) = v' Q v."""
    return np.diag(m_weights(spec, coarse))


def m_functional(spec: LimitingSpectrum, h: ShrinkageFunction) -> FunctionalValue:
    v = shrinkage_vector(spec, h)
    fine = m_weights(spec) * v
    coarse = float(np.dot(m_weights(spec, coarse=True), v))
    n = spec.grid.size
    bulk = float(fine[:n].sum())
    atom = float(fine[n:].sum())
    value = bulk + atom
    return FunctionalValue(value, abs(value - coarse), bulk, atom)


def _kernel(gamma, x, fx, gx, y, fy, gy):
    qx = fx * fx + gx * gx
    qy = fy * fy + gy * gy
    scale = gamma * np.pi**2 * x * y
    first = -gx * gy / (scale * qx * qy)
    with np.errstate(divide="ignore", invalid="ignore"):
        second = 2.0 * (fx * qy - fy * qx) * gx * gy / (scale * (y - x) * qx**2 * qy**2)
    return first + second


def _diagonal_steps(spec: LimitingSpectrum) -> NDArray[np.float64]:
    steps = np.zeros(spec.grid.size)
    for i, (a, b) in enumerate(spec.support):
        sel = spec.interval_index == i
        x = spec.grid[sel]
        room = 0.5 * np.minimum(x - a, b - x)
        steps[sel] = np.minimum(DIAGONAL_STEP * (b - a), room)
    return steps


def _kernel_diagonal(spec: LimitingSpectrum) -> NDArray[np.float64]:
    """K(x, x) as the mean of K(x, x + d) and K(x, x - d)."""
    diag = np.zeros(spec.grid.size)
    inner = ~spec.edge_mask
    if not inner.any():
        return diag
    x = spec.grid[inner]
    d = _diagonal_steps(spec)[inner]
    shifted = np.concatenate((x + d, x - d))
    m, _ = boundary_limit(spec.h_ref, spec.gamma, shifted)
    fy, gy = m.real, np.maximum(m.imag, 0.0)
    fx = np.tile(spec.f_vals[inner], 2)
    gx = np.tile(spec.g_vals[inner], 2)
    k = _kernel(spec.ratio, np.tile(x, 2), fx, gx, shifted, fy, gy)
    diag[inner] = 0.5 * (k[: x.size] + k[x.size :])
    return diag


@lru_cache(maxsize=16)
def kernel_matrix(spec: LimitingSpectrum) -> NDArray[np.float64]:
    """K on the grid; the removable diagonal singularity by finite difference."""
    x, f, g = spec.grid, spec.f_vals, spec.g_vals
    K = _kernel(spec.ratio, x[:, None], f[:, None], g[:, None], x[None, :], f[None, :], g[None, :])
    np.fill_diagonal(K, _kernel_diagonal(spec))
    K = np.where(np.isfinite(K), K, 0.0)
    K = 0.5 * (K + K.T)
    K.setflags(write=False)
    return K


def kernel_K(spec: LimitingSpectrum, x: float, y: float) -> float:
    """K(x, y) for x, y in the support; x == y by symmetric difference."""
    H, gamma = spec.h_ref, spec.gamma
    if abs(x - y) > 0:
        (fx, fy), (gx, gy) = boundary_values(H, gamma, np.array([x, y]))
        return float(_kernel(spec.ratio, x, fx, gx, y, fy, gy))
    interval = next(((a, b) for a, b in spec.support if a <= x <= b), None)
    if interval is None:
        raise DomainError(f"x={x} lies outside the limiting support")
    a, b = interval
    d = min(DIAGONAL_STEP * (b - a), 0.5 * min(x - a, b - x))
    if d <= 0:
        return 0.0
    fs, gs = boundary_values(H, gamma, np.array([x, x + d, x - d]))
    up = _kernel(spec.ratio, x, fs[0], gs[0], x + d, fs[1], gs[1])
    down = _kernel(spec.ratio, x, fs[0], gs[0], x - d, fs[2], gs[2])
    return float(0.5 * (up + down))


def _t_matrix(spec: LimitingSpectrum, coarse: bool) -> NDArray[np.float64]:
    gamma = spec.ratio
    w = spec.coarse_weights if coarse else spec.weights
    x, f, g, q = spec.grid, spec.f_vals, spec.g_vals, spec.modulus2
    Q = w[:, None] * kernel_matrix(spec) * w[None, :]
    Q[np.diag_indices_from(Q)] += w * g / (gamma * np.pi * x**2 * q**2)
    if not spec.overparameterized:
        return Q
    m0, m0p = spec.m0, spec.m0_prime
    u = (q - 2.0 * f * m0 - x * m0 * q) * g / (np.pi * x**2 * q**2)
    n = x.size
    full = np.zeros((n + 1, n + 1))
    full[:n, :n] = Q
    full[:n, n] = full[n, :n] = w * u / (gamma * m0**2)
    full[n, n] = (m0p / m0**4 - 1.0 / m0**2) / gamma
    return full


@lru_cache(maxsize=16)
def _t_matrices(spec: LimitingSpectrum) -> tuple[NDArray, NDArray]:
    fine, coarse = _t_matrix(spec, False), _t_matrix(spec, True)
    fine.setflags(write=False)
    coarse.setflags(write=False)
    logger.debug("assembled T quadratic form of size %d", fine.shape[0])
    return fine, coarse


def t_quadratic_form(spec: LimitingSpectrum, coarse: bool = False) -> NDArray[np.float64]:
    """Symmetric matrix Q with T(h) = v' Q v."""
    return _t_matrices(spec)[1 if coarse else 0]


def t_functional(spec: LimitingSpectrum, h: ShrinkageFunction) -> FunctionalValue:
    v = shrinkage_vector(spec, h)
    fine, coarse = _t_matrices(spec)
    value = float(v @ fine @ v)
    n = spec.grid.size
    bulk = float(v[:n] @ fine[:n, :n] @ v[:n])
    return FunctionalValue(value, abs(value - float(v @ coarse @ v)), bulk, value - bulk)


def t_bilinear(spec: LimitingSpectrum, h1: ShrinkageFunction, h2: ShrinkageFunction) -> float:
    """T(h1, h2) = (T(h1 + h2) - T(h1 - h2)) / 4."""
    v1, v2 = shrinkage_vector(spec, h1), shrinkage_vector(spec, h2)
    Q = t_quadratic_form(spec)
    plus, minus = v1 + v2, v1 - v2
    return float((plus @ Q @ plus - minus @ Q @ minus) / 4.0)


def two_resolvent_limit(spec: LimitingSpectrum, z1: complex, z2: complex) -> complex:
    """lim p^-1 tr(Sigma (S_n - z1)^-1 Sigma (S_n - z2)^-1).

    -1 / (gamma z1 z2 m1 m2) + (m2 - m1) / (gamma z1 z2 m1^2 m2^2 (z2 - z1)),
    with the divided difference replaced by m_'(z1) when z1 and z2 coincide.
    """
    H, gamma = spec.h_ref, spec.ratio
    m1 = companion_transform(H, gamma, complex(z1))
    m2 = companion_transform(H, gamma, complex(z2))
    if abs(z1 - z2) < COINCIDENT_TOL:
        slope = companion_derivative(H, gamma, complex(z1))
    else:
        slope = (m2 - m1) / (z2 - z1)
    denom = gamma * z1 * z2
    return complex(-1.0 / (denom * m1 * m2) + slope / (denom * m1**2 * m2**2))


def asymptotic_frobenius_loss(spec: LimitingSpectrum, h: ShrinkageFunction) -> float:
    """int t^2 dH + int h^2 dF - 2 M(h)."""
    values = h.on_grid(spec.grid)
    h0 = h.value_at_zero()
    return (
        spec.h_ref.second_moment
        + spec.expect(values**2, at_zero=h0 * h0)
        - 2.0 * m_functional(spec, h).value
    )
