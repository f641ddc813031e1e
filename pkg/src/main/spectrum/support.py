"""Real-axis analysis of the inverse map z(m_).

On the real line outside the poles -1/t_i, the support of F is the
complement of the images of the intervals where z(m_) increases; the
support edges are the local extrema of z(m_) and the companion transform
takes the critical value of m_ there.

Contains:
- SupportInterval: one support interval with the critical m_ at both edges
- find_support: sampled inverse map, golden-section refinement of extrema
- companion_at_zero: m_(0) and m_'(0) when gamma (1 - H({0})) > 1
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from core.conf import lab_setting
from core.exceptions import DomainError, NumericalError

from .models import PopulationSpectrum
from .solver import inverse_map, inverse_map_derivative, reduced

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SupportInterval:
    lower: float
    upper: float
    m_lower: float
    m_upper: float

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def as_pair(self) -> tuple[float, float]:
        return (self.lower, self.upper)


@dataclass(frozen=True)
class _Gap:
    lower: float
    upper: float
    m_lower: float | None
    m_upper: float | None


def _samples_per_interval(count: int) -> int:
    budget = lab_setting("SUPPORT_MAX_SAMPLES") // count
    return int(np.clip(budget, 64, lab_setting("SUPPORT_SAMPLES")))


def _pole_intervals(H: PopulationSpectrum, k: int):
    """Yield (samples, z at the left limit, z at the right limit) per interval."""
    poles = -1.0 / H.locations
    scale = 1.0 / H.lower
    logs = np.logspace(-8, 8, k)
    # (-inf, -1/t_min): z rises from 0 at -inf and falls to -inf at the pole
    yield poles[0] - scale * logs[::-1], 0.0, -np.inf
    s = (np.arange(k) + 0.5) / k
    cheb = 0.5 * (1.0 - np.cos(np.pi * s))
    for left, right in zip(poles[:-1], poles[1:]):
        if right <= left:
            continue
        yield left + (right - left) * cheb, np.inf, -np.inf
    # (-1/t_max, 0)
    yield poles[-1] * (1.0 - cheb), np.inf, np.inf
    # (0, inf)
    yield scale * logs, -np.inf, 0.0


def _refine(H, gamma, m, z, i: int, maximum: bool) -> tuple[float, float]:
    sign = -1.0 if maximum else 1.0

    def objective(v: float) -> float:
        return sign * float(inverse_map(H, gamma, np.array([v]))[0])

    try:
        res = minimize_scalar(
            objective,
            bracket=(m[i - 1], m[i], m[i + 1]),
            method="golden",
            tol=lab_setting("GOLDEN_TOL"),
        )
        best = float(res.x)
    except ValueError:
        best = float(m[i])
    if not min(m[i - 1], m[i + 1]) <= best <= max(m[i - 1], m[i + 1]):
        best = float(m[i])
    return best, sign * objective(best)


def _gaps_on(H, gamma, m, z, left_limit, right_limit) -> list[_Gap]:
    slope = np.sign(np.diff(z))
    points = [(None, left_limit)]
    for i in range(1, len(m) - 1):
        if slope[i - 1] > 0 and slope[i] < 0:
            points.append(_refine(H, gamma, m, z, i, maximum=True))
        elif slope[i - 1] < 0 and slope[i] > 0:
            points.append(_refine(H, gamma, m, z, i, maximum=False))
    points.append((None, right_limit))
    gaps = []
    for (m_a, z_a), (m_b, z_b) in zip(points[:-1], points[1:]):
        if z_b > z_a:
            gaps.append(_Gap(z_a, z_b, m_a, m_b))
    return gaps


def _merge(gaps: list[_Gap]) -> list[_Gap]:
    kept = []
    for gap in sorted(gaps, key=lambda g: g.lower):
        if gap.upper <= 0:
            continue
        if gap.lower <= 0:
            gap = _Gap(0.0, gap.upper, None, gap.m_upper)
        if kept and gap.lower <= kept[-1].upper:
            last = kept[-1]
            if gap.upper > last.upper:
                kept[-1] = _Gap(last.lower, gap.upper, last.m_lower, gap.m_upper)
            continue
        kept.append(gap)
    return kept


def find_support(H: PopulationSpectrum, gamma) -> tuple[SupportInterval, ...]:
    """Support of F as disjoint sorted closed intervals in (0, inf)."""
    H, gamma = reduced(H, gamma)
    k = _samples_per_interval(H.locations.size + 2)
    gaps = []
    for m, left, right in _pole_intervals(H, k):
        z = inverse_map(H, gamma, m)
        gaps.extend(_gaps_on(H, gamma, m, z, left, right))
    gaps = _merge(gaps)
    if not gaps or gaps[0].lower > 0:
        raise DomainError("limiting support reaches 0; gamma too close to 1?")
    intervals = []
    for below, above in zip(gaps[:-1], gaps[1:]):
        if above.lower - below.upper <= 1e-12 * above.lower:
            continue
        if below.m_upper is None or above.m_lower is None:
            raise NumericalError("support edge without a critical point of the inverse map")
        intervals.append(
            SupportInterval(below.upper, above.lower, below.m_upper, above.m_lower)
        )
    if np.isfinite(gaps[-1].upper):
        raise NumericalError("inverse map sampling missed the top of the support")
    logger.debug("support for gamma=%s: %s", gamma.gamma, [iv.as_pair() for iv in intervals])
    return tuple(intervals)


def companion_at_zero(H: PopulationSpectrum, gamma) -> tuple[float, float]:
    """Return (m_(0), m_'(0)) for gamma (1 - H({0})) > 1.

    m_(0) is the positive root of z(m_) = 0, i.e. of
    m_ z(m_) = -1 + gamma int t m_ / (1 + t m_) dH(t), which increases from
    -1 to gamma - 1 on (0, inf).
    """
    H, gamma = reduced(H, gamma)
    if not gamma.overparameterized:
        raise DomainError("m_(0) is only finite for gamma (1 - H({0})) > 1")
    g = gamma.gamma
    t, w = H.locations, H.weights

    def scaled(m: float) -> float:
        return -1.0 + g * float(np.dot(w, t * m / (1.0 + t * m)))

    hi = 1.0 / H.lower
    while scaled(hi) <= 0:
        hi *= 2.0
    m0 = brentq(scaled, 0.0, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    slope = float(inverse_map_derivative(H, gamma, np.array([m0]))[0])
    if m0 <= 0 or slope <= 0:
        raise NumericalError("companion value at zero is not positive")
    return float(m0), 1.0 / slope
