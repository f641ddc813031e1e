"""Domain types for the Regression app.

Contains:
- RegressionModelParams: signal scale alpha and the (gamma, H) pair
- RiskReport: limiting test risk split into its bias, variance and atom terms
- LearningCurve: test risk and training error along gradient-flow time
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd
from numpy.typing import NDArray

from core.exceptions import ConfigError
from spectrum.models import AspectRatio, LimitingSpectrum, PopulationSpectrum


@dataclass(frozen=True)
class RegressionModelParams:
    """y = w'x + eps with Var(w_i) = alpha^2 / p and unit noise variance."""

    alpha: float
    gamma: AspectRatio
    H: PopulationSpectrum

    def __post_init__(self) -> None:
        alpha = float(self.alpha)
        if not np.isfinite(alpha) or alpha < 0:
            raise ConfigError("alpha must be a finite nonnegative number")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "gamma", AspectRatio.coerce(self.gamma))

    @property
    def alpha2(self) -> float:
        return self.alpha * self.alpha

    @property
    def optimal_lambda(self) -> float:
        """gamma / alpha^2, the ridge penalty with the smallest limiting risk."""
        if self.alpha == 0:
            return float("inf")
        return float(self.gamma) / self.alpha2

    def check_spectrum(self, spec: LimitingSpectrum) -> None:
        if abs(spec.ratio - float(self.gamma)) > 1e-12 or not spec.h_ref.same_as(self.H):
            raise ConfigError("limiting spectrum was solved for a different (gamma, H)")


@dataclass(frozen=True)
class RiskReport:
    test_risk: float
    bias_integral: float
    variance_integral: float
    atom_term: float

    def as_dict(self) -> dict:
        return {
            "test_risk": self.test_risk,
            "bias_integral": self.bias_integral,
            "variance_integral": self.variance_integral,
            "atom_term": self.atom_term,
        }


@dataclass(frozen=True, eq=False)
class LearningCurve:
    """Risk and training error of gradient flow at penalty ``lam``."""

    lam: float
    times: NDArray[np.float64]
    test_risk: NDArray[np.float64]
    train_error: NDArray[np.float64]

    def __post_init__(self) -> None:
        times = np.asarray(self.times, dtype=np.float64)
        if times.ndim != 1 or times.size == 0:
            raise ConfigError("times must be a non-empty 1-d array")
        if np.any(times < 0) or np.any(np.diff(times) <= 0):
            raise ConfigError("times must be nonnegative and strictly increasing")
        for name in ("test_risk", "train_error"):
            values = np.asarray(getattr(self, name), dtype=np.float64)
            if values.shape != times.shape:
                raise ConfigError(f"{name} must have one value per time")
            object.__setattr__(self, name, values)
        object.__setattr__(self, "times", times)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"t": self.times, "test_risk": self.test_risk, "train_error": self.train_error})
