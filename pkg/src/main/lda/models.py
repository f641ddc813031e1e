"""Domain types for the LDA app.

Contains:
- LdaModelParams: class-mean scale alpha with the (gamma, H) pair
- LdaErrorReport: limiting Theta(h) and the misclassification error it implies
- RelaxationFit, QpSolution: results of the shrinkage optimization programs
- Alpha2Estimate: plug-in estimate of alpha^2 from one sample
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from core.exceptions import ConfigError
from functionals.models import ShrinkageFunction
from spectrum.models import AspectRatio, LimitingSpectrum, PopulationSpectrum


@dataclass(frozen=True)
class LdaModelParams:
    """x = Sigma^{1/2} z + delta y with Var(delta_i) = alpha^2 / p."""

    alpha: float
    gamma: AspectRatio
    H: PopulationSpectrum

    def __post_init__(self) -> None:
        alpha = float(self.alpha)
        if not np.isfinite(alpha) or alpha <= 0:
            raise ConfigError("alpha must be a positive finite number")
        if self.H.lower <= 0:
            raise ConfigError("the population spectrum must be bounded away from 0")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "gamma", AspectRatio.coerce(self.gamma))

    @property
    def s(self) -> float:
        """Signal-to-noise ratio alpha^2 / gamma."""
        return self.alpha**2 / float(self.gamma)

    def with_alpha(self, alpha: float) -> "LdaModelParams":
        return LdaModelParams(alpha, self.gamma, self.H)

    def check_spectrum(self, spec: LimitingSpectrum) -> None:
        if abs(spec.ratio - float(self.gamma)) > 1e-12 or not spec.h_ref.same_as(self.H):
            raise ConfigError("limiting spectrum was solved for a different (gamma, H)")


@dataclass(frozen=True)
class LdaErrorReport:
    """error = Phi(-sqrt(theta)), theta = numerator / (denom_M + denom_T)."""

    theta: float
    error: float
    numerator: float
    denom_M: float
    denom_T: float
    degenerate: bool = False

    def as_dict(self) -> dict:
        return {
            "theta": self.theta,
            "error": self.error,
            "numerator": self.numerator,
            "denom_M": self.denom_M,
            "denom_T": self.denom_T,
            "degenerate": self.degenerate,
        }


@dataclass(frozen=True)
class RelaxationFit:
    A: float
    B: float
    residual: float


@dataclass(frozen=True)
class QpSolution:
    h_opt: ShrinkageFunction
    objective: float
    kkt_residual: float
    psd_floor: float = 0.0
    bound_active: bool = False
    relaxation_fit: RelaxationFit | None = None

    @property
    def regularized(self) -> bool:
        """True when negative eigenvalues of the program were clipped; ``psd_floor`` is their relative size."""
        return self.psd_floor > 0

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"x": self.h_opt.grid, "h_opt": self.h_opt.values})


@dataclass(frozen=True)
class Alpha2Estimate:
    """||delta_hat||^2 - tr(Sigma_hat) / n, clamped at 0."""

    value: float
    raw: float
    clamped: bool

    def __float__(self) -> float:
        return self.value
