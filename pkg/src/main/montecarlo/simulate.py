"""Random draws of the regression and LDA models.

Replicate r of an experiment is generated by a Philox counter-based
generator keyed with seed XOR r, so every replicate can be produced on any
worker, in any order, and reproduces bit for bit.
"""

from __future__ import annotations

import logging

import numpy as np

from core.exceptions import ConfigError

from .models import CovarianceModel, ExperimentConfig, SimulationDraw

logger = logging.getLogger(__name__)

# sample eigenvalues below this fraction of the largest one are exact zeros
ZERO_EIGENVALUE_TOL = 1e-10


def rng_for(config: ExperimentConfig, replicate: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(config.seed ^ int(replicate)))


def _noise(rng: np.random.Generator, z_dist: str, shape) -> np.ndarray:
    if z_dist == "rademacher":
        return rng.choice(np.array([-1.0, 1.0]), size=shape)
    return rng.standard_normal(shape)


def generate_regression_draw(
    config: ExperimentConfig, replicate: int = 0, covariance: CovarianceModel | None = None
) -> SimulationDraw:
    """X = Sigma^{1/2} Z, w ~ N(0, alpha^2/p I), y = X'w + eps."""
    rng = rng_for(config, replicate)
    covariance = covariance or config.covariance()
    p, n = config.p, config.n
    X = covariance.apply_sqrt(_noise(rng, config.z_dist, (p, n)))
    w = rng.standard_normal(p) * (config.alpha / np.sqrt(p))
    eps = rng.standard_normal(n)
    y = X.T @ w + eps
    U, sqrt_lambda, Vt = np.linalg.svd(X / np.sqrt(n), full_matrices=False)
    return SimulationDraw(
        X=X,
        replicate=int(replicate),
        U=U,
        eigenvalues=sqrt_lambda**2,
        sqrt_lambda=sqrt_lambda,
        Vt=Vt,
        w=w,
        eps=eps,
        y=y,
    )


def generate_lda_draw(
    config: ExperimentConfig, replicate: int = 0, covariance: CovarianceModel | None = None
) -> SimulationDraw:
    """x_i = Sigma^{1/2} z_i + delta y_i with the first half labelled +1.

    delta_hat = X y / n and the within-class covariance is the label-centered
    sample covariance. Zero eigenvalues (p > n) are dropped from the
    stored decomposition and counted by ``null_dimension``.
    """
    if config.n % 2:
        raise ConfigError("the LDA model needs an even sample count")
    if config.z_dist != "gaussian":
        raise ConfigError("the LDA model is defined for Gaussian classes")
    rng = rng_for(config, replicate)
    covariance = covariance or config.covariance()
    p, n = config.p, config.n
    labels = np.concatenate((np.ones(n // 2), -np.ones(n // 2)))
    delta = rng.standard_normal(p) * (config.alpha / np.sqrt(p))
    X = covariance.apply_sqrt(rng.standard_normal((p, n))) + np.outer(delta, labels)
    delta_hat = X @ labels / n
    positive, negative = X[:, : n // 2], X[:, n // 2 :]
    centered = np.hstack(
        (positive - positive.mean(axis=1, keepdims=True), negative - negative.mean(axis=1, keepdims=True))
    )
    U, sv, _ = np.linalg.svd(centered / np.sqrt(n), full_matrices=False)
    eigenvalues = sv**2
    keep = eigenvalues > ZERO_EIGENVALUE_TOL * eigenvalues.max()
    return SimulationDraw(
        X=X,
        replicate=int(replicate),
        U=U[:, keep],
        eigenvalues=eigenvalues[keep],
        delta=delta,
        labels=labels,
        delta_hat=delta_hat,
        sample_trace=float(eigenvalues.sum()),
    )


def replicate_draw(config: ExperimentConfig, replicate: int, task: str = "regression", covariance=None):
    if task == "regression":
        return generate_regression_draw(config, replicate, covariance)
    if task == "lda":
        return generate_lda_draw(config, replicate, covariance)
    raise ConfigError(f"unknown simulation task {task!r}")
