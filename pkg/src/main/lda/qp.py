"""Convex quadratic programs over {v >= 0, a'v = 1}.

minimize v'Pv with P symmetric positive semidefinite and a > 0. Solved by
accelerated projected gradient with adaptive restart on the Jacobi-scaled
problem; the projection onto the scaled feasible set is exact, through a
one-dimensional root search on the multiplier of the affine constraint.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy.optimize import brentq

from core.conf import lab_setting
from core.exceptions import ConvergenceError, NumericalError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class QpResult:
    v: NDArray[np.float64]
    objective: float
    kkt_residual: float
    psd_floor: float
    iterations: int

    @property
    def regularized(self) -> bool:
        return self.psd_floor > 0


def floor_psd(P: NDArray[np.float64]) -> tuple[NDArray[np.float64], float]:
    """Symmetrize P and clip small negative eigenvalues to 0.

    Returns the floored matrix and the relative size of the largest clipped
    eigenvalue, 0 when nothing was clipped.

    Eigenvalues below -PSD_FAIL_TOL * ||P|| mean the discretized form is
    not PSD at all and raise NumericalError.
    """
    P = 0.5 * (P + P.T)
    eigvals, eigvecs = np.linalg.eigh(P)
    scale = max(np.abs(eigvals).max(), np.finfo(float).tiny)
    lowest = eigvals[0] / scale
    if lowest >= -lab_setting("PSD_FLOOR_TOL"):
        return P, 0.0
    if lowest < -lab_setting("PSD_FAIL_TOL"):
        raise NumericalError(f"quadratic form is not positive semidefinite (relative eigenvalue {lowest:.2e})")
    logger.warning("quadratic form floored at 0 (relative eigenvalue %.2e)", lowest)
    floored = (eigvecs * np.maximum(eigvals, 0.0)) @ eigvecs.T
    return 0.5 * (floored + floored.T), float(-lowest)


def project(z: NDArray[np.float64], b: NDArray[np.float64]) -> NDArray[np.float64]:
    """Euclidean projection of z onto {y >= 0, b'y = 1} for b > 0."""

    def excess(mu):
        return float(np.dot(b, np.maximum(z - mu * b, 0.0))) - 1.0

    # excess(hi) = -1 and every coordinate is positive at lo, where excess >= b'b
    ratios = z / b
    hi = ratios.max()
    lo = min(ratios.min(), (np.dot(b, z) - 1.0) / np.dot(b, b)) - 1.0
    mu = brentq(excess, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    return np.maximum(z - mu * b, 0.0)


def _residual(y, grad, b, step) -> float:
    moved = project(y - step * grad, b)
    return float(np.linalg.norm(y - moved) / max(np.linalg.norm(y), np.finfo(float).tiny))


def solve_simplex_qp(P, a, start=None) -> QpResult:
    """Minimize v'Pv subject to v >= 0 and a'v = 1.

    The KKT residual is the relative length of one projected-gradient step
    and must fall below QP_TOL within QP_MAX_ITER iterations.
    """
    P, psd_floor = floor_psd(np.asarray(P, dtype=np.float64))
    a = np.asarray(a, dtype=np.float64)
    if np.any(a <= 0):
        raise NumericalError("constraint weights must be positive")
    diag = np.diag(P)
    d = 1.0 / np.sqrt(np.where(diag > 0, diag, diag[diag > 0].min() if np.any(diag > 0) else 1.0))
    S = d[:, None] * P * d[None, :]
    b = d * a
    lipschitz = 2.0 * max(np.linalg.eigvalsh(S)[-1], np.finfo(float).tiny)
    step = 1.0 / lipschitz
    tol, max_iter = lab_setting("QP_TOL"), lab_setting("QP_MAX_ITER")

    v0 = np.full(a.size, 1.0 / a.sum()) if start is None else np.asarray(start, dtype=np.float64)
    y = project(v0 / d, b)
    z, momentum = y.copy(), 1.0
    residual = np.inf
    for k in range(1, max_iter + 1):
        grad_z = 2.0 * S @ z
        y_next = project(z - step * grad_z, b)
        if np.dot(grad_z, y_next - y) > 0:
            # restart: the momentum step went uphill
            momentum, z = 1.0, y
            continue
        momentum_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * momentum * momentum))
        z = y_next + ((momentum - 1.0) / momentum_next) * (y_next - y)
        y, momentum = y_next, momentum_next
        if k % 10 == 0:
            residual = _residual(y, 2.0 * S @ y, b, step)
            if residual < tol:
                break
    else:
        raise ConvergenceError("quadratic program did not reach its KKT tolerance", residual)
    v = d * y
    logger.debug("quadratic program solved in %d iterations, residual %.2e", k, residual)
    return QpResult(v, float(v @ P @ v), residual, psd_floor, k)
