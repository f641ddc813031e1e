"""Forms validating the ``params`` block of a run configuration.

One form per command. Forms are bound directly to the JSON mapping, so
numbers arrive as numbers and nested objects as dicts. Each form's
``clean`` resolves the derived domain objects (population spectrum,
aspect ratio, experiment config) and ``resolved_params`` returns the
declared fields with defaults filled in, which is what the sidecar file
records.
"""

from __future__ import annotations

import numpy as np
from django import forms
from django.core.exceptions import ValidationError

from core.conf import lab_setting
from core.exceptions import ConfigError
from montecarlo.models import Z_DISTRIBUTIONS, ExperimentConfig
from spectrum.models import AspectRatio, PopulationSpectrum

SIGMA_HELP = '{"kind": "atoms", "H": {"atoms": [{"t": 1, "w": 1}]}} or {"kind": "toeplitz_ar", "rho": 0.5}'


def _number_list(value, name: str, positive: bool = False, increasing: bool = False) -> list[float]:
    if not isinstance(value, list) or not value:
        raise ValidationError(f"{name} must be a non-empty list of numbers")
    try:
        numbers = [float(v) for v in value]
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{name} must be a non-empty list of numbers") from exc
    array = np.asarray(numbers)
    if not np.all(np.isfinite(array)) or np.any(array < 0):
        raise ValidationError(f"{name} must hold finite nonnegative numbers")
    if positive and np.any(array <= 0):
        raise ValidationError(f"{name} must hold positive numbers")
    if increasing and np.any(np.diff(array) <= 0):
        raise ValidationError(f"{name} must be strictly increasing")
    return numbers


class LabForm(forms.Form):
    """Base form: domain ConfigErrors raised while cleaning become form errors."""

    def resolved_params(self) -> dict:
        return {name: self.cleaned_data[name] for name in self.fields if self.cleaned_data.get(name) is not None}

    def _domain(self, build, *args, **kwargs):
        try:
            return build(*args, **kwargs)
        except ConfigError as exc:
            raise ValidationError(str(exc)) from exc


class PopulationForm(LabForm):
    """Population covariance and aspect ratio.

    ``gamma`` may be given directly or through the dimensions ``p`` and
    ``n``; a Toeplitz population needs ``p``.
    """

    grid_setting = "GRID_SIZE"

    sigma = forms.JSONField(help_text=SIGMA_HELP)
    gamma = forms.FloatField(required=False)
    p = forms.IntegerField(required=False, min_value=2)
    n = forms.IntegerField(required=False, min_value=2)
    grid_size = forms.IntegerField(required=False, min_value=32)

    def clean_sigma(self):
        sigma = self.cleaned_data["sigma"]
        if not isinstance(sigma, dict) or sigma.get("kind") not in ("atoms", "toeplitz_ar"):
            raise ValidationError(f"sigma must be {SIGMA_HELP}")
        return sigma

    def clean(self):
        cleaned = super().clean()
        sigma, gamma, p, n = (cleaned.get(k) for k in ("sigma", "gamma", "p", "n"))
        if sigma is None:
            return cleaned
        if (p is None) != (n is None):
            raise ValidationError("p and n are given together")
        if gamma is None and p is None:
            raise ValidationError("give gamma or the dimensions p and n")
        if p is not None:
            if gamma is not None and abs(gamma - p / n) > 1e-12 * max(gamma, 1.0):
                raise ValidationError(f"gamma={gamma} disagrees with p/n={p / n}")
            gamma = p / n
            cleaned["gamma"] = gamma
        cleaned["aspect"] = self._domain(AspectRatio, gamma)
        if sigma["kind"] == "atoms":
            cleaned["population"] = self._domain(PopulationSpectrum.from_json, sigma.get("H"))
        elif p is None:
            raise ValidationError("a toeplitz_ar population needs the dimension p")
        else:
            rho = sigma.get("rho")
            if not isinstance(rho, (int, float)):
                raise ValidationError("toeplitz_ar needs a numeric rho")
            cleaned["population"] = self._domain(PopulationSpectrum.toeplitz_ar, float(rho), p)
        if cleaned.get("grid_size") is None:
            cleaned["grid_size"] = int(lab_setting(self.grid_setting))
        if cleaned["grid_size"] < 64 and self.grid_setting == "GRID_SIZE":
            raise ValidationError("grid_size must be at least 64")
        return cleaned


class ReplicatesMixin(forms.Form):
    """Optional Monte Carlo comparison run alongside the analytic values."""

    replicates = forms.IntegerField(required=False, min_value=0)
    seed = forms.IntegerField(required=False, min_value=0, max_value=2**64 - 1)

    def clean(self):
        cleaned = super().clean()
        cleaned["replicates"] = cleaned.get("replicates") or 0
        cleaned["seed"] = cleaned.get("seed") or 0
        if cleaned["replicates"] and cleaned.get("p") is None:
            raise ValidationError("simulated replicates need the dimensions p and n")
        return cleaned

    def experiment(self, alpha: float, z_dist: str = "gaussian") -> ExperimentConfig:
        cleaned = self.cleaned_data
        return self._domain(
            ExperimentConfig,
            p=cleaned["p"],
            n=cleaned["n"],
            alpha=alpha,
            sigma=cleaned["sigma"],
            z_dist=z_dist,
            seed=cleaned["seed"],
            replicates=cleaned["replicates"],
        )


class TimesMixin(forms.Form):
    times = forms.JSONField(required=False, help_text="increasing nonnegative times")

    def clean_times(self):
        times = self.cleaned_data.get("times")
        if times is None:
            start, stop, count = (lab_setting(k) for k in ("TIME_MIN", "TIME_MAX", "TIME_POINTS"))
            return np.geomspace(start, stop, count).tolist()
        return _number_list(times, "times", increasing=True)


class SpectrumForm(PopulationForm):
    pass


class RegressionCurveForm(ReplicatesMixin, TimesMixin, PopulationForm):
    alpha = forms.FloatField(min_value=0)
    lam = forms.FloatField(min_value=0, help_text="ridge penalty of the gradient flow")
    z_dist = forms.ChoiceField(choices=[(z, z) for z in Z_DISTRIBUTIONS], required=False)

    def clean_z_dist(self):
        return self.cleaned_data.get("z_dist") or "gaussian"


class TrainingCurveForm(TimesMixin, PopulationForm):
    alpha = forms.FloatField(min_value=0)
    lam = forms.FloatField(min_value=0)


class RiskSurfaceForm(TimesMixin, PopulationForm):
    alpha = forms.FloatField(min_value=0)
    lambdas = forms.JSONField()
    table = forms.ChoiceField(choices=[("surface", "surface"), ("early_stopping", "early_stopping")], required=False)

    def clean_lambdas(self):
        return _number_list(self.cleaned_data["lambdas"], "lambdas")

    def clean_table(self):
        return self.cleaned_data.get("table") or "surface"


class AlphaGridMixin(forms.Form):
    alphas = forms.JSONField()

    def clean_alphas(self):
        return _number_list(self.cleaned_data["alphas"], "alphas", positive=True)


class LdaErrorForm(ReplicatesMixin, AlphaGridMixin, PopulationForm):
    shrinker = forms.JSONField(help_text='e.g. {"family": "ridge_inverse", "lambda": 1.0}')

    def clean_shrinker(self):
        shrinker = self.cleaned_data["shrinker"]
        if not isinstance(shrinker, dict):
            raise ValidationError("shrinker must be a JSON object")
        return shrinker


class OptimalShrinkageForm(PopulationForm):
    grid_setting = "QP_GRID_SIZE"

    alpha = forms.FloatField()
    relaxed = forms.BooleanField(required=False)

    def clean_alpha(self):
        alpha = self.cleaned_data["alpha"]
        if not alpha > 0:
            raise ValidationError("alpha must be positive")
        return alpha


class CompareShrinkersForm(AlphaGridMixin, PopulationForm):
    grid_setting = "QP_GRID_SIZE"


class ExperimentForm(LabForm):
    experiment = forms.JSONField(help_text="p, n, alpha, sigma, z_dist, seed, replicates")

    def clean_experiment(self):
        payload = self.cleaned_data["experiment"]
        if not isinstance(payload, dict):
            raise ValidationError("experiment must be a JSON object")
        config = self._domain(ExperimentConfig.from_json, payload)
        self.cleaned_data["config"] = config
        return config.to_json()


class SimulateForm(ExperimentForm):
    task = forms.ChoiceField(choices=[("regression", "regression"), ("lda", "lda")])
    shrinkers = forms.JSONField(help_text="label -> shrinkage function")
    frobenius = forms.BooleanField(required=False)
    grid_size = forms.IntegerField(required=False, min_value=64)

    def clean_shrinkers(self):
        shrinkers = self.cleaned_data["shrinkers"]
        if not isinstance(shrinkers, dict) or not shrinkers:
            raise ValidationError("shrinkers must map labels to shrinkage functions")
        if not all(isinstance(v, dict) for v in shrinkers.values()):
            raise ValidationError("every shrinkage function must be a JSON object")
        return shrinkers

    def clean(self):
        cleaned = super().clean()
        if cleaned.get("grid_size") is None:
            cleaned["grid_size"] = int(lab_setting("GRID_SIZE"))
        return cleaned


class EstimateSpectrumForm(ExperimentForm):
    bandwidth = forms.FloatField(required=False)
    points = forms.IntegerField(required=False, min_value=16)
    replicate = forms.IntegerField(required=False, min_value=0)

    def clean_bandwidth(self):
        bandwidth = self.cleaned_data.get("bandwidth")
        if bandwidth is not None and not bandwidth > 0:
            raise ValidationError("bandwidth must be positive")
        return bandwidth

    def clean(self):
        cleaned = super().clean()
        cleaned["replicate"] = cleaned.get("replicate") or 0
        return cleaned


COMMAND_FORMS: dict[str, type[LabForm]] = {
    "spectrum": SpectrumForm,
    "regression-curve": RegressionCurveForm,
    "risk-surface": RiskSurfaceForm,
    "training-curve": TrainingCurveForm,
    "lda-error": LdaErrorForm,
    "optimal-shrinkage": OptimalShrinkageForm,
    "compare-shrinkers": CompareShrinkersForm,
    "simulate": SimulateForm,
    "estimate-spectrum": EstimateSpectrumForm,
}
