"""Solver for the generalized Marchenko-Pastur equation.

Works with the companion transform m_(z), the Stieltjes transform of the
n x n Gram matrix spectrum, through its explicit inverse

    z(m_) = -1/m_ + gamma * sum_i w_i t_i / (1 + t_i m_).

Contains:
- inverse_map / inverse_map_derivative: z(m_) and z'(m_)
- companion_transform: m_(z) for non-real z (vectorized)
- solve_stieltjes: (m, m_) with the fixed-point residual checked
- companion_derivative: m_'(z) = 1 / z'(m_)
- boundary_limit: lim m_(x + i eps) along the eps-continuation
"""

from __future__ import annotations

import logging

import numpy as np
from numpy.typing import NDArray

from core.conf import lab_setting
from core.exceptions import ConvergenceError, DomainError

from .models import AspectRatio, PopulationSpectrum

logger = logging.getLogger(__name__)

# rows of m_ evaluated at once when the atom list is long
_CHUNK = 1 << 20


def reduced(H: PopulationSpectrum, gamma) -> tuple[PopulationSpectrum, AspectRatio]:
    """Drop the atom of H at 0, rescaling gamma by the weight kept.

    Null population directions add nothing to z(m_), so (gamma, H) and
    (gamma (1 - H({0})), H restricted to t > 0) share the companion transform.
    """
    gamma = AspectRatio.coerce(gamma)
    w0 = H.null_weight
    if w0 == 0:
        return H, gamma
    ratio = gamma.gamma * (1.0 - w0)
    if abs(ratio - 1.0) < 1e-3:
        raise DomainError(f"gamma (1 - H({{0}})) = {ratio:.6g} is too close to 1")
    return H.positive_part(), AspectRatio(ratio)


def _atom_sums(H: PopulationSpectrum, m, power: int):
    """sum_i w_i t_i^power / (1 + t_i m)^power, chunked over m."""
    t, w = H.locations, H.weights
    m = np.asarray(m)
    flat = m.ravel()
    out = np.empty(flat.shape, dtype=np.result_type(flat, np.float64))
    step = max(1, _CHUNK // t.size)
    for start in range(0, flat.size, step):
        block = flat[start : start + step, None]
        out[start : start + step] = ((w * t**power) / (1.0 + t * block) ** power).sum(axis=1)
    return out.reshape(m.shape)


def inverse_map(H: PopulationSpectrum, gamma, m):
    """z(m_) = -1/m_ + gamma * int t / (1 + t m_) dH(t)."""
    g = float(gamma)
    return -1.0 / m + g * _atom_sums(H, m, 1)


def inverse_map_derivative(H: PopulationSpectrum, gamma, m):
    """z'(m_) = 1/m_^2 - gamma * int t^2 / (1 + t m_)^2 dH(t)."""
    g = float(gamma)
    return 1.0 / (m * m) - g * _atom_sums(H, m, 2)


def fixed_point_residual(H: PopulationSpectrum, gamma, z, m_companion):
    """|m - Phi(m)| for m recovered from the companion value.

    Phi(m) = int dH(t) / (t (1 - gamma - gamma z m) - z), which in terms of
    the companion value reads -(1/z) int dH(t) / (1 + t m_).
    """
    g = float(gamma)
    m = (m_companion + (1.0 - g) / z) / g
    t, w = H.locations, H.weights
    denom = t * (1.0 - g - g * z[..., None] * m[..., None]) - z[..., None]
    phi = (w / denom).sum(axis=-1)
    return np.abs(m - phi)


def _damped_iteration(H, gamma, z, start, max_iter: int, tol: float):
    """m_ <- (1 - omega) m_ + omega * (-1 / (z - gamma int t/(1 + t m_) dH))."""
    g = float(gamma)
    omega = lab_setting("DAMPING")
    m = start.copy()
    active = np.ones(m.shape, dtype=bool)
    for _ in range(max_iter):
        if not active.any():
            break
        update = -1.0 / (z[active] - g * _atom_sums(H, m[active], 1))
        new = (1.0 - omega) * m[active] + omega * update
        step = np.abs(new - m[active])
        m[active] = new
        idx = np.flatnonzero(active)
        active[idx[step <= tol * np.maximum(1.0, np.abs(new))]] = False
    return m


def _newton(H, gamma, z, start, max_iter: int):
    """Newton on z(m_) = z, backtracking to keep Im m_ > 0 and reduce |z(m_) - z|."""
    m = start.copy()
    tol = 64 * np.finfo(np.float64).eps * (1.0 + np.abs(z))
    for _ in range(max_iter):
        resid = inverse_map(H, gamma, m) - z
        todo = np.abs(resid) > tol
        if not todo.any():
            break
        idx = np.flatnonzero(todo)
        cur = m[idx]
        cur_res = np.abs(resid[idx])
        delta = resid[idx] / inverse_map_derivative(H, gamma, cur)
        scale = np.ones(idx.size)
        accepted = np.zeros(idx.size, dtype=bool)
        trial = cur - delta
        for _ in range(40):
            ok = (trial.imag > 0) & (np.abs(inverse_map(H, gamma, trial) - z[idx]) < cur_res)
            accepted |= ok
            if accepted.all():
                break
            pending = ~accepted
            scale[pending] *= 0.5
            trial[pending] = cur[pending] - scale[pending] * delta[pending]
        if not accepted.any():
            break
        m[idx[accepted]] = trial[accepted]
    return m


def _solve_upper(H, gamma, z, start=None):
    """m_(z) for Im z > 0 without the residual check."""
    if start is None:
        start = -1.0 / z
    m = _damped_iteration(
        H, gamma, z, start, lab_setting("FIXED_POINT_MAX_ITER"), lab_setting("RESIDUAL_TOL")
    )
    return _newton(H, gamma, z, m, lab_setting("NEWTON_MAX_ITER"))


def _check_residual(H, gamma, z, m_companion) -> float:
    residual = fixed_point_residual(H, gamma, z, m_companion)
    worst = float(np.max(residual)) if residual.size else 0.0
    if not np.isfinite(worst) or worst >= lab_setting("RESIDUAL_TOL"):
        raise ConvergenceError("Marchenko-Pastur fixed point did not converge", worst)
    if np.any(m_companion.imag < 0):
        raise ConvergenceError("companion transform left the upper half-plane", worst)
    return worst


def companion_transform(H: PopulationSpectrum, gamma, z):
    """m_(z) for non-real z, using m_(conj z) = conj m_(z) below the axis."""
    H, gamma = reduced(H, gamma)
    z_arr = np.atleast_1d(np.asarray(z, dtype=np.complex128))
    if np.any(z_arr.imag == 0):
        raise DomainError("the companion transform is evaluated off the real axis only")
    lower = z_arr.imag < 0
    upper_z = np.where(lower, np.conj(z_arr), z_arr)
    m = _solve_upper(H, gamma, upper_z)
    _check_residual(H, gamma, upper_z, m)
    m = np.where(lower, np.conj(m), m)
    return m if np.ndim(z) else complex(m[0])


def solve_stieltjes(H: PopulationSpectrum, gamma, z):
    """Return (m, m_companion) at z with Im z > 0.

    m satisfies m = int dH(t) / (t (1 - gamma - gamma z m) - z) with residual
    below RESIDUAL_TOL and m_companion = -(1 - gamma)/z + gamma m.
    """
    z_arr = np.asarray(z, dtype=np.complex128)
    if np.any(z_arr.imag <= 0):
        raise DomainError("solve_stieltjes needs Im z > 0")
    g = float(AspectRatio.coerce(gamma))
    m_companion = companion_transform(H, gamma, z_arr)
    m = (m_companion + (1.0 - g) / z_arr) / g
    if np.ndim(z):
        return m, m_companion
    return complex(m), complex(m_companion)


def companion_derivative(H: PopulationSpectrum, gamma, z):
    """m_'(z) from the inverse function rule."""
    m = companion_transform(H, gamma, z)
    d = 1.0 / inverse_map_derivative(H, gamma, np.asarray(m))
    return d if np.ndim(z) else complex(d)


def eps_schedule() -> list[float]:
    start = lab_setting("EPS_START")
    stop = lab_setting("EPS_STOP")
    factor = lab_setting("EPS_FACTOR")
    levels = [start]
    while levels[-1] / factor >= stop * (1 - 1e-9):
        levels.append(levels[-1] / factor)
    return levels


def boundary_limit(H: PopulationSpectrum, gamma, x) -> tuple[NDArray, float]:
    """Approximate lim_{eps -> 0} m_(x + i eps) for real x > 0.

    Each eps level warm-starts the next one; the value at the last level is
    returned with the worst fixed-point residual seen there.
    """
    H, gamma = reduced(H, gamma)
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    levels = eps_schedule()
    z = x + 1j * levels[0]
    m = _solve_upper(H, gamma, z)
    for eps in levels[1:]:
        z = x + 1j * eps
        m = _newton(H, gamma, z, m, lab_setting("NEWTON_MAX_ITER"))
    residual = _check_residual(H, gamma, z, m)
    logger.debug("boundary values at %d points, residual %.2e", x.size, residual)
    return m, residual
