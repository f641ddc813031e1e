"""Dispatch of a RunSpec to the analytic and Monte Carlo code paths.

Every command validates its parameters with the matching form before any
computation, returns an Artifact, and the runner writes the artifact and
the sidecar with the resolved configuration.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np
import pandas as pd

from functionals.models import SPECTRAL_FAMILIES
from functionals.shrinkers import resolve_shrinker
from lda.classifier import compare_shrinkers, theta
from lda.models import LdaModelParams
from lda.shrinkage import optimal_shrinkage_qp, relaxed_optimum
from montecarlo.empirical import kernel_estimate_fg
from montecarlo.harness import run_replicates, summarize
from montecarlo.simulate import generate_regression_draw
from regression.models import RegressionModelParams
from regression.risk import (
    check_overregularized_monotone,
    early_stopping_comparison,
    final_train_error,
    gd_shrinkage,
    learning_curve,
    risk_surface,
)
from spectrum.builder import build_limiting_spectrum

from .exceptions import ConfigError
from .export import Artifact, write_artifact, write_sidecar
from .forms import COMMAND_FORMS
from .models import RunSpec

logger = logging.getLogger(__name__)


def _spectrum(data, minimum: int = 64):
    spec = build_limiting_spectrum(data["population"], data["aspect"], max(data["grid_size"], minimum))
    logger.info("spectrum built: %d nodes on %d interval(s)", len(spec), len(spec.support))
    return spec


def _regression_params(data) -> RegressionModelParams:
    return RegressionModelParams(data["alpha"], data["aspect"], data["population"])


def run_spectrum(form, run_spec: RunSpec) -> Artifact:
    spec = _spectrum(form.cleaned_data)
    extras = {
        "support": [list(interval) for interval in spec.support],
        "atom0_mass": spec.atom0_mass,
        "residual": spec.residual,
    }
    return Artifact(spec.to_frame(), extras)


def run_regression_curve(form, run_spec: RunSpec) -> Artifact:
    data = form.cleaned_data
    params = _regression_params(data)
    spec = _spectrum(data)
    times, lam = np.asarray(data["times"]), data["lam"]
    curve = learning_curve(params, spec, lam, times)
    frame = pd.DataFrame({"t": times, "predicted_risk": curve.test_risk, "predicted_train_error": curve.train_error})
    logger.info("curve computed at %d times", times.size)
    if data["replicates"]:
        config = form.experiment(data["alpha"], data["z_dist"])
        shrinkers = {float(t): gd_shrinkage(t, lam) for t in times}
        rows = run_replicates(config, "regression", shrinkers, threads=run_spec.threads, key="t")
        summary = summarize(rows, "t", ["test_risk", "train_error"])
        frame["empirical_mean"] = summary["test_risk_mean"].to_numpy()
        frame["empirical_se"] = summary["test_risk_se"].to_numpy()
        frame["empirical_train_mean"] = summary["train_error_mean"].to_numpy()
        frame["empirical_train_se"] = summary["train_error_se"].to_numpy()
        logger.info("simulated %d replicates", config.replicates)
    return Artifact(frame, {"lambda": lam, "optimal_lambda": params.optimal_lambda})


def run_training_curve(form, run_spec: RunSpec) -> Artifact:
    data = form.cleaned_data
    params = _regression_params(data)
    spec = _spectrum(data)
    curve = learning_curve(params, spec, data["lam"], data["times"])
    monotone, increase = check_overregularized_monotone(params, spec, data["lam"], data["times"], diagnostic=True)
    extras = {
        "final_train_error": final_train_error(params, spec, data["lam"]),
        "overregularized": data["lam"] >= params.optimal_lambda,
        "risk_non_increasing": monotone,
        "max_risk_increase": increase,
    }
    logger.info("curve computed at %d times", len(data["times"]))
    return Artifact(curve.to_frame(), extras)


def run_risk_surface(form, run_spec: RunSpec) -> Artifact:
    data = form.cleaned_data
    params = _regression_params(data)
    spec = _spectrum(data)
    if data["table"] == "early_stopping":
        frame = early_stopping_comparison(params, spec, data["lambdas"])
    else:
        frame = risk_surface(params, spec, data["lambdas"], data["times"])
    logger.info("%s table computed for %d penalties", data["table"], len(data["lambdas"]))
    return Artifact(frame)


def run_lda_error(form, run_spec: RunSpec) -> Artifact:
    data = form.cleaned_data
    models = [LdaModelParams(alpha, data["aspect"], data["population"]) for alpha in data["alphas"]]
    if data["replicates"] and data["n"] % 2:
        raise ConfigError("simulated LDA replicates need an even n")
    spec = _spectrum(data)
    h = resolve_shrinker(data["shrinker"], spec)
    rows = []
    for params in models:
        row = {"alpha": params.alpha, **theta(params, spec, h).as_dict()}
        if data["replicates"]:
            config = form.experiment(params.alpha)
            frame = run_replicates(config, "lda", {h.label: h}, threads=run_spec.threads)
            summary = summarize(frame, "shrinker", "lda_error").iloc[0]
            row["empirical_mean"] = summary["lda_error_mean"]
            row["empirical_se"] = summary["lda_error_se"]
        rows.append(row)
    logger.info("errors computed at %d alpha values", len(rows))
    return Artifact(pd.DataFrame(rows), {"shrinker": h.label})


def run_optimal_shrinkage(form, run_spec: RunSpec) -> Artifact:
    data = form.cleaned_data
    params = LdaModelParams(data["alpha"], data["aspect"], data["population"])
    spec = _spectrum(data)
    solution = relaxed_optimum(params, spec) if data["relaxed"] else optimal_shrinkage_qp(params, spec)
    extras = {
        "alpha": params.alpha,
        "objective": solution.objective,
        "kkt_residual": solution.kkt_residual,
        "regularized": solution.regularized,
        "psd_floor": solution.psd_floor,
        "bound_active": solution.bound_active,
        "at_zero": solution.h_opt.at_zero,
    }
    if solution.relaxation_fit is not None:
        fit = solution.relaxation_fit
        extras["relaxation_fit"] = {"A": fit.A, "B": fit.B, "residual": fit.residual}
    return Artifact(solution.to_frame(), extras)


def run_compare_shrinkers(form, run_spec: RunSpec) -> Artifact:
    data = form.cleaned_data
    for alpha in data["alphas"]:
        LdaModelParams(alpha, data["aspect"], data["population"])
    spec = _spectrum(data)
    return Artifact(compare_shrinkers(spec, data["alphas"]))


def _simulation_table(frame: pd.DataFrame) -> pd.DataFrame:
    """Replicate rows followed by mean and standard-error rows per shrinker."""
    metrics = [c for c in frame.columns if c not in ("replicate", "shrinker", "degenerate")]
    summary = summarize(frame, "shrinker", metrics)
    blocks = [frame.assign(stat="replicate")]
    for stat in ("mean", "se"):
        block = summary[["shrinker"]].copy()
        for column in metrics:
            block[column] = summary[f"{column}_{stat}"].to_numpy()
        blocks.append(block.assign(stat=stat))
    table = pd.concat(blocks, ignore_index=True)
    table["replicate"] = table["replicate"].astype("Int64")
    ordered = ["stat", "replicate", "shrinker", *metrics]
    if "degenerate" in table.columns:
        ordered.append("degenerate")
    return table[ordered]


def run_simulate(form, run_spec: RunSpec) -> Artifact:
    data = form.cleaned_data
    config = data["config"]
    payloads = data["shrinkers"]
    spec = None
    if any(p.get("family") in SPECTRAL_FAMILIES for p in payloads.values()):
        spec = build_limiting_spectrum(config.population(), config.gamma, data["grid_size"])
        logger.info("spectrum built: %d nodes on %d interval(s)", len(spec), len(spec.support))
    shrinkers = {label: resolve_shrinker(payload, spec) for label, payload in payloads.items()}
    frame = run_replicates(config, data["task"], shrinkers, threads=run_spec.threads, frobenius=data["frobenius"])
    logger.info("simulated %d replicates of %d shrinker(s)", config.replicates, len(shrinkers))
    return Artifact(_simulation_table(frame), {"gamma": float(config.gamma)})


def run_estimate_spectrum(form, run_spec: RunSpec) -> Artifact:
    data = form.cleaned_data
    config = data["config"]
    draw = generate_regression_draw(config, data["replicate"])
    x = None
    if data.get("points"):
        x = np.linspace(draw.eigenvalues.min(), draw.eigenvalues.max(), data["points"])
    estimate = kernel_estimate_fg(draw.eigenvalues, float(config.gamma), data.get("bandwidth"), x, p=config.p)
    logger.info("kernel estimate from %d eigenvalues", draw.eigenvalues.size)
    return Artifact(estimate.to_frame(), {"bandwidth": estimate.bandwidth, "gamma": float(config.gamma)})


HANDLERS = {
    "spectrum": run_spectrum,
    "regression-curve": run_regression_curve,
    "risk-surface": run_risk_surface,
    "training-curve": run_training_curve,
    "lda-error": run_lda_error,
    "optimal-shrinkage": run_optimal_shrinkage,
    "compare-shrinkers": run_compare_shrinkers,
    "simulate": run_simulate,
    "estimate-spectrum": run_estimate_spectrum,
}


def validate(run_spec: RunSpec):
    """Bound and cleaned form for the run's parameters; ConfigError when invalid."""
    form_class = COMMAND_FORMS[run_spec.command]
    unknown = set(run_spec.params) - set(form_class.base_fields)
    if unknown:
        raise ConfigError(f"unknown parameters for {run_spec.command}: {sorted(unknown)}")
    form = form_class(data=run_spec.params)
    if not form.is_valid():
        errors = {name: [str(message) for message in messages] for name, messages in form.errors.items()}
        raise ConfigError(json.dumps(errors, sort_keys=True))
    logger.info("config validated: %s", run_spec.command)
    return form


def run(run_spec: RunSpec) -> Path:
    """Validate, compute, then write the artifact and its sidecar; returns the artifact path."""
    form = validate(run_spec)
    artifact = HANDLERS[run_spec.command](form, run_spec)
    path = write_artifact(artifact, run_spec.output, run_spec.format)
    write_sidecar(run_spec.resolved(form.resolved_params()), run_spec.output)
    return path
