"""Domain types of the Functionals app.

Contains:
- ShrinkageFunction: scalar function applied to sample eigenvalues, either
  a closed-form family or values sampled on a spectrum grid
- FunctionalValue: a functional value with its quadrature diagnostics
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.typing import NDArray

from core.exceptions import ConfigError, EvaluationError


def _sqrt(x):
    return np.sqrt(np.maximum(x, 0.0))


def _safe_div(num, den):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)


def _gradient_flow(x, t, lam):
    rate = x + lam
    return _safe_div(-np.expm1(-t * rate) * _sqrt(x), rate)


def _polynomial(x, coefficients):
    return np.polynomial.polynomial.polyval(x, np.asarray(coefficients, dtype=np.float64))


@dataclass(frozen=True)
class _Family:
    params: tuple[str, ...]
    evaluate: Callable
    at_zero: Callable


# Values on x > 0 and at x = 0. Families singular at 0 take the value 0 there,
# which matches shrinkage applied to the nonzero part of the spectrum only.
FAMILIES: dict[str, _Family] = {
    "ridge": _Family(("lambda",), lambda x, lam: _safe_div(_sqrt(x), x + lam), lambda lam: 0.0),
    "gradient_flow": _Family(("t", "lambda"), _gradient_flow, lambda t, lam: 0.0),
    "pseudo_inverse": _Family((), lambda x: _safe_div(1.0, _sqrt(x)), lambda: 0.0),
    "ridge_inverse": _Family(("lambda",), lambda x, lam: 1.0 / (x + lam), lambda lam: 1.0 / lam),
    "inverse": _Family((), lambda x: _safe_div(1.0, x), lambda: 0.0),
    "identity": _Family((), lambda x: np.asarray(x, dtype=np.float64), lambda: 0.0),
    "constant": _Family(("c",), lambda x, c: np.full(np.shape(x), float(c)), lambda c: float(c)),
    "polynomial": _Family(("coefficients",), _polynomial, lambda coefficients: float(coefficients[0])),
    "exponential": _Family(("rate",), lambda x, rate: np.exp(-rate * x), lambda rate: 1.0),
}

# families that need a solved spectrum; built by functionals.shrinkers
SPECTRAL_FAMILIES = ("lp_covariance", "lp_precision", "mean_shrinker")


@dataclass(frozen=True, eq=False)
class ShrinkageFunction:
    """A function h applied to eigenvalues of a sample covariance.

    Closed-form functions carry a family tag and parameters. Grid functions
    carry values on the abscissae of a LimitingSpectrum grid and a separate
    value at 0; between nodes they interpolate linearly and outside the
    grid range they hold the end values.
    """

    family: str
    params: tuple[tuple[str, object], ...] = ()
    grid: NDArray[np.float64] | None = None
    values: NDArray[np.float64] | None = None
    at_zero: float | None = None

    def __post_init__(self) -> None:
        if self.family == "grid":
            if self.grid is None or self.values is None or self.at_zero is None:
                raise ConfigError("grid shrinkage needs abscissae, values and a value at 0")
            grid = np.asarray(self.grid, dtype=np.float64)
            values = np.asarray(self.values, dtype=np.float64)
            if grid.shape != values.shape or grid.ndim != 1:
                raise ConfigError("grid shrinkage values must match the grid length")
            object.__setattr__(self, "grid", grid)
            object.__setattr__(self, "values", values)
            object.__setattr__(self, "at_zero", float(self.at_zero))
            return
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown shrinkage family {self.family!r}")
        spec = FAMILIES[self.family]
        given = dict(self.params)
        missing = [p for p in spec.params if p not in given]
        if missing:
            raise ConfigError(f"family {self.family!r} needs parameter(s) {missing}")
        extra = set(given) - set(spec.params)
        if extra:
            raise ConfigError(f"family {self.family!r} got unexpected parameter(s) {sorted(extra)}")
        for name in ("lambda", "t", "rate"):
            if name in given and (not np.isfinite(given[name]) or given[name] < 0):
                raise ConfigError(f"{name} must be a finite nonnegative number")
        if self.family == "ridge_inverse" and not given["lambda"] > 0:
            raise ConfigError("ridge_inverse needs lambda > 0")
        if self.family == "polynomial" and len(given["coefficients"]) == 0:
            raise ConfigError("polynomial needs at least one coefficient")
        ordered = tuple((p, given[p]) for p in spec.params)
        object.__setattr__(self, "params", ordered)

    @classmethod
    def closed(cls, family: str, **params) -> "ShrinkageFunction":
        if "lam" in params:
            params["lambda"] = params.pop("lam")
        cleaned = {}
        for key, value in params.items():
            cleaned[key] = tuple(float(v) for v in value) if key == "coefficients" else float(value)
        return cls(family, tuple(cleaned.items()))

    @classmethod
    def from_grid(cls, grid, values, at_zero: float) -> "ShrinkageFunction":
        return cls("grid", grid=grid, values=values, at_zero=at_zero)

    @property
    def kind(self) -> str:
        return "grid" if self.family == "grid" else "closed_form"

    def param(self, name: str):
        return dict(self.params)[name]

    @property
    def label(self) -> str:
        if self.kind == "grid":
            return "grid"
        args = ",".join(f"{k}={v}" for k, v in self.params)
        return f"{self.family}({args})" if args else self.family

    def value_at_zero(self) -> float:
        if self.kind == "grid":
            return self.at_zero
        family = FAMILIES[self.family]
        return float(family.at_zero(*(v for _, v in self.params)))

    def __call__(self, x):
        """Evaluate at x >= 0; exact zeros take ``value_at_zero()``."""
        xs = np.asarray(x, dtype=np.float64)
        if self.kind == "grid":
            out = np.interp(xs, self.grid, self.values)
        else:
            family = FAMILIES[self.family]
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                out = np.asarray(family.evaluate(xs, *(v for _, v in self.params)), dtype=np.float64)
        out = np.where(xs == 0, self.value_at_zero(), out)
        if not np.all(np.isfinite(out)):
            raise EvaluationError(f"{self.label} is not finite at some evaluation points")
        return out if np.ndim(x) else float(out)

    def on_grid(self, grid) -> NDArray[np.float64]:
        """Values at the abscissae of a spectrum grid."""
        if self.kind == "grid" and (self.grid is grid or np.array_equal(self.grid, grid)):
            if not np.all(np.isfinite(self.values)):
                raise EvaluationError("grid shrinkage has non-finite values")
            return self.values
        return self(np.asarray(grid))

    def scaled(self, factor: float) -> "ShrinkageFunction":
        if self.kind == "grid":
            return ShrinkageFunction.from_grid(self.grid, factor * self.values, factor * self.at_zero)
        if self.family == "constant":
            return ShrinkageFunction.closed("constant", c=factor * self.param("c"))
        if self.family == "polynomial":
            coeffs = [factor * c for c in self.param("coefficients")]
            return ShrinkageFunction.closed("polynomial", coefficients=coeffs)
        raise ConfigError("only grid, constant and polynomial functions scale in closed form")

    def to_json(self) -> dict:
        if self.kind == "grid":
            return {"grid": self.values.tolist(), "at_zero": self.at_zero, "x": self.grid.tolist()}
        payload = {"family": self.family}
        for key, value in self.params:
            payload[key] = list(value) if isinstance(value, tuple) else value
        return payload

    @classmethod
    def from_json(cls, payload, grid=None) -> "ShrinkageFunction":
        """``{"family": "ridge", "lambda": 0.33}`` or ``{"grid": [...], "at_zero": v}``.

        A grid payload without its own ``"x"`` abscissae lives on ``grid``.
        """
        if isinstance(payload, str):
            payload = json.loads(payload)
        if not isinstance(payload, dict):
            raise ConfigError("shrinkage function must be a JSON object")
        if "grid" in payload:
            xs = payload.get("x", grid)
            if xs is None:
                raise ConfigError("grid shrinkage needs abscissae or a spectrum grid")
            return cls.from_grid(xs, payload["grid"], payload.get("at_zero", 0.0))
        params = {k: v for k, v in payload.items() if k != "family"}
        family = payload.get("family")
        if family in SPECTRAL_FAMILIES:
            raise ConfigError(f"family {family!r} needs a solved spectrum")
        try:
            return cls.closed(family, **params)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"bad parameters for family {family!r}: {exc}") from exc


@dataclass(frozen=True)
class FunctionalValue:
    """Value of a trace functional with refinement diagnostics.

    ``error_estimate`` is the difference between the fine rule and the rule
    on every other node; ``bulk`` and ``atom`` split the value into the
    continuous-support part and the gamma > 1 terms carried by h(0).
    """

    value: float
    error_estimate: float
    bulk: float
    atom: float = 0.0

    @property
    def flagged(self) -> bool:
        return self.error_estimate >= 1e-6 * abs(self.value) + 1e-9

    def __float__(self) -> float:
        return self.value
