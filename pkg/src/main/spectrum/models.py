"""Domain types of the Spectrum app.

Nothing here is stored in a database: the types are immutable value
objects shared freely between threads.

Contains:
- PopulationSpectrum: the population spectral measure H as weighted atoms
- AspectRatio: the limiting ratio gamma = p / n
- LimitingSpectrum: the solved limiting spectrum of the sample covariance
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import pandas as pd
from numpy.typing import NDArray
from scipy.linalg import eigvalsh_tridiagonal, toeplitz

from core.exceptions import ConfigError

WEIGHT_TOL = 1e-12


@dataclass(frozen=True)
class PopulationSpectrum:
    """Finite atomic measure H = sum_i w_i delta_{t_i}.

    Atoms are kept sorted by location. Continuous population spectra are
    represented by their discretization into equally weighted atoms.
    """

    atoms: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        if not self.atoms:
            raise ConfigError("a population spectrum needs at least one atom")
        cleaned = []
        for atom in self.atoms:
            try:
                t, w = (float(v) for v in atom)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"malformed atom {atom!r}") from exc
            if not np.isfinite(t) or t < 0:
                raise ConfigError(f"atom location must be finite and >= 0, got {t}")
            if not np.isfinite(w) or w <= 0:
                raise ConfigError(f"atom weight must be positive, got {w}")
            cleaned.append((t, w))
        total = sum(w for _, w in cleaned)
        if abs(total - 1.0) > WEIGHT_TOL * max(1, len(cleaned)):
            raise ConfigError(f"atom weights must sum to 1, got {total!r}")
        object.__setattr__(self, "atoms", tuple(sorted(cleaned)))

    @classmethod
    def point_mass(cls, location: float = 1.0) -> "PopulationSpectrum":
        return cls(((location, 1.0),))

    @classmethod
    def uniform(cls, locations) -> "PopulationSpectrum":
        """Equal weights on the given locations (e.g. uniform on {1..5})."""
        locs = [float(v) for v in locations]
        if not locs:
            raise ConfigError("uniform spectrum needs at least one location")
        weight = 1.0 / len(locs)
        return cls(tuple((t, weight) for t in locs))

    @classmethod
    def from_eigenvalues(cls, eigenvalues) -> "PopulationSpectrum":
        """Empirical spectral measure of a finite covariance matrix."""
        values = np.sort(np.asarray(eigenvalues, dtype=np.float64).ravel())
        if values.size == 0:
            raise ConfigError("no eigenvalues given")
        # round-off can push tiny eigenvalues of a PSD matrix below zero
        values = np.where((values < 0) & (values > -1e-10 * values.max()), 0.0, values)
        locations, counts = np.unique(values, return_counts=True)
        weights = counts / values.size
        weights[-1] = 1.0 - weights[:-1].sum()
        return cls(tuple(zip(locations.tolist(), weights.tolist())))

    @classmethod
    def toeplitz_ar(cls, rho: float, p: int) -> "PopulationSpectrum":
        """Eigenvalues of Sigma_ij = rho^|i-j| as p equally weighted atoms."""
        if not 0 < rho < 1:
            raise ConfigError("toeplitz rho must lie in (0, 1)")
        if p < 2:
            raise ConfigError("toeplitz dimension must be at least 2")
        # The AR(1) correlation matrix has a tridiagonal inverse, which gives
        # the eigenvalues much faster than a dense solve.
        diag = np.full(p, 1.0 + rho * rho)
        diag[0] = diag[-1] = 1.0
        off = np.full(p - 1, -rho)
        inverse_eigs = eigvalsh_tridiagonal(diag / (1 - rho * rho), off / (1 - rho * rho))
        return cls.from_eigenvalues(1.0 / inverse_eigs)

    @staticmethod
    def toeplitz_matrix(rho: float, p: int) -> NDArray[np.float64]:
        return toeplitz(rho ** np.arange(p, dtype=np.float64))

    @classmethod
    def from_json(cls, payload) -> "PopulationSpectrum":
        """Accept ``{"atoms": [{"t": 1.0, "w": 0.5}, ...]}`` or a JSON string."""
        if isinstance(payload, str):
            payload = json.loads(payload)
        try:
            atoms = tuple((a["t"], a["w"]) for a in payload["atoms"])
        except (KeyError, TypeError) as exc:
            raise ConfigError("population spectrum must be {'atoms': [{'t':..,'w':..}]}") from exc
        return cls(atoms)

    def to_json(self) -> dict:
        return {"atoms": [{"t": t, "w": w} for t, w in self.atoms]}

    @cached_property
    def locations(self) -> NDArray[np.float64]:
        return np.array([t for t, _ in self.atoms])

    @cached_property
    def weights(self) -> NDArray[np.float64]:
        return np.array([w for _, w in self.atoms])

    def moment(self, k: int = 1) -> float:
        return float(np.dot(self.weights, self.locations**k))

    @property
    def mean(self) -> float:
        return self.moment(1)

    @property
    def second_moment(self) -> float:
        return self.moment(2)

    @property
    def lower(self) -> float:
        return float(self.locations[0])

    @property
    def upper(self) -> float:
        return float(self.locations[-1])

    @property
    def null_weight(self) -> float:
        """Weight of the atom at t = 0 (0.0 when there is none)."""
        return float(self.weights[self.locations == 0].sum())

    def positive_part(self) -> "PopulationSpectrum":
        """H conditioned on t > 0."""
        keep = [(t, w) for t, w in self.atoms if t > 0]
        if not keep:
            raise ConfigError("a population spectrum needs an atom away from 0")
        total = sum(w for _, w in keep)
        return PopulationSpectrum(tuple((t, w / total) for t, w in keep))

    def scaled(self, factor: float) -> "PopulationSpectrum":
        """Pushforward of H under t -> factor * t."""
        if factor <= 0:
            raise ConfigError("scale factor must be positive")
        return PopulationSpectrum(tuple((factor * t, w) for t, w in self.atoms))

    def same_as(self, other: "PopulationSpectrum") -> bool:
        return len(self.atoms) == len(other.atoms) and np.allclose(
            np.asarray(self.atoms), np.asarray(other.atoms), rtol=1e-12, atol=0
        )


@dataclass(frozen=True)
class AspectRatio:
    """Limit of p / n. The critical ratio 1 is excluded."""

    gamma: float

    def __post_init__(self) -> None:
        try:
            value = float(self.gamma)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"gamma must be a number, got {self.gamma!r}") from exc
        if not np.isfinite(value) or value <= 0:
            raise ConfigError(f"gamma must be positive, got {value}")
        if abs(value - 1.0) < 1e-3:
            raise ConfigError("gamma must stay at least 1e-3 away from 1")
        object.__setattr__(self, "gamma", value)

    @classmethod
    def coerce(cls, value) -> "AspectRatio":
        return value if isinstance(value, cls) else cls(value)

    @classmethod
    def from_dimensions(cls, p: int, n: int) -> "AspectRatio":
        return cls(p / n)

    def __float__(self) -> float:
        return self.gamma

    @property
    def overparameterized(self) -> bool:
        return self.gamma > 1


@dataclass(frozen=True, eq=False)
class LimitingSpectrum:
    """Solved limiting spectrum F for a pair (gamma, H).

    The grid holds Chebyshev-Lobatto nodes per support interval. ``weights``
    are Clenshaw-Curtis weights on those nodes and ``coarse_weights`` the
    rule on every other node, used for refinement error estimates.
    ``f_vals + 1j * g_vals`` are the boundary values of the companion
    Stieltjes transform; edge nodes carry g = 0 exactly.
    """

    gamma: AspectRatio
    h_ref: PopulationSpectrum
    support: tuple[tuple[float, float], ...]
    grid: NDArray[np.float64]
    f_vals: NDArray[np.float64]
    g_vals: NDArray[np.float64]
    density_vals: NDArray[np.float64]
    weights: NDArray[np.float64]
    coarse_weights: NDArray[np.float64]
    interval_index: NDArray[np.int64]
    atom0_mass: float
    m0: float | None = None
    m0_prime: float | None = None
    residual: float = 0.0
    edge_mask: NDArray[np.bool_] = field(default=None)

    def __post_init__(self) -> None:
        for name in ("grid", "f_vals", "g_vals", "density_vals", "weights", "coarse_weights"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.edge_mask is None:
            object.__setattr__(self, "edge_mask", self.g_vals == 0)

    def __len__(self) -> int:
        return self.grid.size

    @property
    def ratio(self) -> float:
        return float(self.gamma)

    @property
    def overparameterized(self) -> bool:
        """True when the sample null space is wider than the population one.

        That is gamma (1 - H({0})) > 1; only then is m_(0) finite and the
        atom of F at 0 carries its own terms in the functionals.
        """
        return self.ratio * (1.0 - self.h_ref.null_weight) > 1.0

    @cached_property
    def modulus2(self) -> NDArray[np.float64]:
        """|m(x)|^2 = f^2 + g^2 on the grid."""
        return self.f_vals**2 + self.g_vals**2

    def integrate(self, values, coarse: bool = False) -> float:
        """Quadrature of ``values`` (sampled on the grid) over the support."""
        w = self.coarse_weights if coarse else self.weights
        return float(np.dot(w, np.asarray(values, dtype=np.float64)))

    def expect(self, values, at_zero: float = 0.0, coarse: bool = False) -> float:
        """Integral against dF including the atom at zero."""
        bulk = self.integrate(np.asarray(values) * self.density_vals, coarse=coarse)
        return bulk + self.atom0_mass * at_zero

    def mass(self) -> float:
        return self.expect(np.ones_like(self.grid), at_zero=1.0)

    def first_moment(self) -> float:
        return self.expect(self.grid)

    @property
    def lower_edge(self) -> float:
        return self.support[0][0]

    @property
    def upper_edge(self) -> float:
        return self.support[-1][1]

    @property
    def width(self) -> float:
        return float(sum(b - a for a, b in self.support))

    def contains(self, x, tol: float) -> NDArray[np.bool_]:
        x = np.asarray(x, dtype=np.float64)
        inside = np.zeros(x.shape, dtype=bool)
        for a, b in self.support:
            slack = tol * (b - a)
            inside |= (x >= a - slack) & (x <= b + slack)
        return inside

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {"x": self.grid, "f": self.f_vals, "g": self.g_vals, "density": self.density_vals}
        )
