"""Domain types for the Monte Carlo app.

Contains:
- CovarianceModel: a population covariance Sigma, diagonal or dense
- ExperimentConfig: dimensions, signal scale, covariance, noise law, seed, replicates
- SimulationDraw: one simulated data set with its sample spectral decomposition
- EmpiricalSpectrumEstimate: kernel estimates of f and g from sample eigenvalues
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import pandas as pd
from numpy.typing import NDArray

from core.exceptions import ConfigError
from spectrum.models import AspectRatio, PopulationSpectrum

Z_DISTRIBUTIONS = ("gaussian", "rademacher")
MAX_DIMENSION = 8000


@dataclass(frozen=True, eq=False)
class CovarianceModel:
    """Sigma as its diagonal or as a dense symmetric matrix."""

    diagonal: NDArray[np.float64] | None = None
    dense: NDArray[np.float64] | None = None

    def __post_init__(self) -> None:
        if (self.diagonal is None) == (self.dense is None):
            raise ConfigError("a covariance model is either diagonal or dense")

    @classmethod
    def from_atoms(cls, H: PopulationSpectrum, p: int) -> "CovarianceModel":
        """floor(w_i p) copies of each t_i; the remainder goes to the heaviest atom."""
        counts = np.floor(H.weights * p).astype(int)
        counts[int(np.argmax(H.weights))] += p - counts.sum()
        return cls(diagonal=np.repeat(H.locations, counts))

    @classmethod
    def toeplitz_ar(cls, rho: float, p: int) -> "CovarianceModel":
        return cls(dense=PopulationSpectrum.toeplitz_matrix(rho, p))

    @property
    def p(self) -> int:
        return self.diagonal.size if self.diagonal is not None else self.dense.shape[0]

    @cached_property
    def _eigh(self) -> tuple[NDArray, NDArray]:
        values, vectors = np.linalg.eigh(self.dense)
        return np.maximum(values, 0.0), vectors

    @cached_property
    def sqrt_matrix(self) -> NDArray[np.float64]:
        values, vectors = self._eigh
        return (vectors * np.sqrt(values)) @ vectors.T

    def eigenvalues(self) -> NDArray[np.float64]:
        return np.sort(self.diagonal) if self.diagonal is not None else self._eigh[0]

    def population(self) -> PopulationSpectrum:
        return PopulationSpectrum.from_eigenvalues(self.eigenvalues())

    def matrix(self) -> NDArray[np.float64]:
        return np.diag(self.diagonal) if self.diagonal is not None else self.dense

    def apply(self, M):
        """Sigma @ M."""
        if self.diagonal is not None:
            return self.diagonal[:, None] * M if np.ndim(M) == 2 else self.diagonal * M
        return self.dense @ M

    def apply_sqrt(self, M):
        """Sigma^{1/2} @ M."""
        if self.diagonal is not None:
            root = np.sqrt(self.diagonal)
            return root[:, None] * M if np.ndim(M) == 2 else root * M
        return self.sqrt_matrix @ M

    def quadratic(self, v) -> float:
        """v' Sigma v."""
        return float(np.dot(v, self.apply(v)))

    def trace(self) -> float:
        return float(self.diagonal.sum() if self.diagonal is not None else np.trace(self.dense))


@dataclass(frozen=True)
class ExperimentConfig:
    """A Monte Carlo experiment.

    ``sigma`` is ``{"kind": "atoms", "H": {...}}`` (diagonal Sigma built
    from the atoms of H) or ``{"kind": "toeplitz_ar", "rho": 0.5}``.
    """

    p: int
    n: int
    alpha: float
    sigma: dict = field(hash=False)
    z_dist: str = "gaussian"
    seed: int = 0
    replicates: int = 1

    def __post_init__(self) -> None:
        for name in ("p", "n", "replicates", "seed"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float, np.integer)) or int(value) != value:
                raise ConfigError(f"{name} must be an integer")
            object.__setattr__(self, name, int(value))
        try:
            object.__setattr__(self, "alpha", float(self.alpha))
        except (TypeError, ValueError) as exc:
            raise ConfigError("alpha must be a number") from exc
        if self.p < 2 or self.n < 2:
            raise ConfigError("p and n must be at least 2")
        if max(self.p, self.n) > MAX_DIMENSION:
            raise ConfigError(f"p and n are capped at {MAX_DIMENSION}")
        if self.replicates < 1:
            raise ConfigError("replicates must be at least 1")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if not np.isfinite(self.alpha) or self.alpha < 0:
            raise ConfigError("alpha must be a finite nonnegative number")
        if self.z_dist not in Z_DISTRIBUTIONS:
            raise ConfigError(f"z_dist must be one of {Z_DISTRIBUTIONS}")
        kind = self.sigma.get("kind") if isinstance(self.sigma, dict) else None
        if kind == "atoms":
            PopulationSpectrum.from_json(self.sigma.get("H"))
        elif kind == "toeplitz_ar":
            rho = self.sigma.get("rho")
            if not isinstance(rho, (int, float)) or not 0 < rho < 1:
                raise ConfigError("toeplitz_ar needs rho in (0, 1)")
        else:
            raise ConfigError("sigma must be {'kind': 'atoms', 'H': ...} or {'kind': 'toeplitz_ar', 'rho': ...}")
        AspectRatio.from_dimensions(self.p, self.n)

    @property
    def gamma(self) -> AspectRatio:
        return AspectRatio.from_dimensions(self.p, self.n)

    def covariance(self) -> CovarianceModel:
        if self.sigma["kind"] == "atoms":
            return CovarianceModel.from_atoms(PopulationSpectrum.from_json(self.sigma["H"]), self.p)
        return CovarianceModel.toeplitz_ar(float(self.sigma["rho"]), self.p)

    def population(self) -> PopulationSpectrum:
        """H as used by the limiting formulas: the atoms, or the Toeplitz eigenvalues."""
        if self.sigma["kind"] == "atoms":
            return PopulationSpectrum.from_json(self.sigma["H"])
        return PopulationSpectrum.toeplitz_ar(float(self.sigma["rho"]), self.p)

    @classmethod
    def from_json(cls, payload: dict) -> "ExperimentConfig":
        known = {"p", "n", "alpha", "sigma", "z_dist", "seed", "replicates"}
        extra = set(payload) - known
        if extra:
            raise ConfigError(f"unknown experiment keys {sorted(extra)}")
        try:
            return cls(**payload)
        except TypeError as exc:
            raise ConfigError(f"incomplete experiment: {exc}") from exc

    def to_json(self) -> dict:
        return {
            "p": self.p,
            "n": self.n,
            "alpha": self.alpha,
            "sigma": self.sigma,
            "z_dist": self.z_dist,
            "seed": self.seed,
            "replicates": self.replicates,
        }


@dataclass(frozen=True, eq=False)
class SimulationDraw:
    """One replicate.

    Regression draws carry ``w``, ``eps`` and ``y`` plus the thin SVD
    X / sqrt(n) = U diag(sqrt_lambda) Vt. LDA draws carry ``delta``,
    ``labels``, ``delta_hat`` and the eigendecomposition of the
    within-class sample covariance in ``eigenvalues`` and ``U``.
    """

    X: NDArray[np.float64]
    replicate: int
    U: NDArray[np.float64]
    eigenvalues: NDArray[np.float64]
    sqrt_lambda: NDArray[np.float64] | None = None
    Vt: NDArray[np.float64] | None = None
    w: NDArray[np.float64] | None = None
    eps: NDArray[np.float64] | None = None
    y: NDArray[np.float64] | None = None
    delta: NDArray[np.float64] | None = None
    labels: NDArray[np.float64] | None = None
    delta_hat: NDArray[np.float64] | None = None
    sample_trace: float | None = None

    @property
    def p(self) -> int:
        return self.X.shape[0]

    @property
    def n(self) -> int:
        return self.X.shape[1]

    @property
    def null_dimension(self) -> int:
        """Number of zero sample eigenvalues not represented in ``eigenvalues``."""
        return self.p - self.eigenvalues.size


@dataclass(frozen=True, eq=False)
class EmpiricalSpectrumEstimate:
    x: NDArray[np.float64]
    f_hat: NDArray[np.float64]
    g_hat: NDArray[np.float64]
    bandwidth: float

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"x": self.x, "f_hat": self.f_hat, "g_hat": self.g_hat})
