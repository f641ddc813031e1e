"""Closed forms for the identity population spectrum H = delta_1."""

import numpy as np


def marchenko_pastur_edges(gamma: float) -> tuple[float, float]:
    root = np.sqrt(float(gamma))
    return (1.0 - root) ** 2, (1.0 + root) ** 2


def marchenko_pastur_density(x, gamma: float):
    """Continuous part of the Marchenko-Pastur law (atom at 0 excluded)."""
    gamma = float(gamma)
    a, b = marchenko_pastur_edges(gamma)
    x = np.asarray(x, dtype=np.float64)
    inside = (x > a) & (x < b)
    out = np.zeros_like(x)
    xi = x[inside]
    out[inside] = np.sqrt((b - xi) * (xi - a)) / (2.0 * np.pi * gamma * xi)
    return out


def marchenko_pastur_companion(z, gamma: float):
    """Companion transform for H = delta_1.

    Root of z m^2 + (z + 1 - gamma) m + 1 = 0 with Im m > 0 (for Im z > 0).
    """
    gamma = float(gamma)
    z = np.asarray(z, dtype=np.complex128)
    b = z + 1.0 - gamma
    disc = np.sqrt(b * b - 4.0 * z)
    r1 = (-b + disc) / (2.0 * z)
    r2 = (-b - disc) / (2.0 * z)
    pick = np.where(np.sign(r1.imag) == np.sign(z.imag), r1, r2)
    return pick if pick.ndim else complex(pick)


def marchenko_pastur_stieltjes(z, gamma: float):
    """m(z) = (m_(z) + (1 - gamma)/z) / gamma for H = delta_1."""
    gamma = float(gamma)
    m_companion = marchenko_pastur_companion(z, gamma)
    return (m_companion + (1.0 - gamma) / np.asarray(z)) / gamma
