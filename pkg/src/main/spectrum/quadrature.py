"""Clenshaw-Curtis rules on Chebyshev-Lobatto nodes.

The nodes cluster toward the interval ends, where limiting densities
vanish like a square root, and every other node of an n-rule forms the
n/2-rule, which gives a cheap refinement error estimate.
"""

import numpy as np
from numpy.typing import NDArray

from core.exceptions import ConfigError


def clenshaw_curtis(n: int) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Return (x, w) for the (n+1)-point rule on [-1, 1], x increasing."""
    if n < 2 or n % 2:
        raise ConfigError(f"Clenshaw-Curtis order must be even and >= 2, got {n}")
    theta = np.pi * np.arange(n + 1) / n
    x = -np.cos(theta)
    w = np.empty(n + 1)
    w[0] = w[n] = 1.0 / (n * n - 1)
    inner = theta[1:n]
    k = np.arange(1, n // 2)
    v = 1.0 - 2.0 * (np.cos(2.0 * np.outer(inner, k)) / (4.0 * k * k - 1.0)).sum(axis=1)
    v -= np.cos(n * inner) / (n * n - 1)
    w[1:n] = 2.0 * v / n
    return x, w


def interval_rule(a: float, b: float, n: int) -> tuple[NDArray, NDArray, NDArray]:
    """Map the n-rule to [a, b].

    Returns nodes, fine weights and coarse weights; the coarse weights are
    the n/2-rule placed on the even-index nodes and zero elsewhere.
    """
    if not b > a:
        raise ConfigError(f"empty interval [{a}, {b}]")
    x, w = clenshaw_curtis(n)
    half = 0.5 * (b - a)
    nodes = 0.5 * (a + b) + half * x
    nodes[0], nodes[-1] = a, b
    coarse = np.zeros(n + 1)
    if n // 2 >= 2 and (n // 2) % 2 == 0:
        coarse[::2] = clenshaw_curtis(n // 2)[1]
    else:
        # odd half order: fall back to the trapezoid rule on the even nodes
        sub = nodes[::2]
        trap = np.zeros(sub.size)
        trap[:-1] += 0.5 * np.diff(sub)
        trap[1:] += 0.5 * np.diff(sub)
        coarse[::2] = trap / half
    return nodes, half * w, half * coarse
