"""Replicate loop and aggregation for Monte Carlo experiments."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pandas as pd

from core.conf import worker_count
from core.exceptions import ConfigError

from .empirical import (
    empirical_frobenius_loss,
    empirical_lda_error,
    empirical_mean_shrinker_loss,
    empirical_regression_risk,
    estimate_draw_alpha2,
)
from .models import ExperimentConfig
from .simulate import replicate_draw

logger = logging.getLogger(__name__)

TASKS = ("regression", "lda")


def _replicate_rows(config, task, shrinkers, key, covariance, frobenius, r) -> list[dict]:
    draw = replicate_draw(config, r, task, covariance)
    rows = []
    if task == "lda":
        alpha2 = estimate_draw_alpha2(draw)
    for label, h in shrinkers.items():
        row = {"replicate": r, key: label}
        if task == "regression":
            row["test_risk"], row["train_error"] = empirical_regression_risk(draw, h, covariance)
        else:
            row["lda_error"], row["degenerate"] = empirical_lda_error(draw, h, covariance)
            row["mean_loss"] = empirical_mean_shrinker_loss(draw, h)
            row["alpha2_hat"] = alpha2.value
            row["alpha2_raw"] = alpha2.raw
        if frobenius:
            row["frobenius_loss"] = empirical_frobenius_loss(draw, h, covariance)
        rows.append(row)
    return rows


def run_replicates(
    config: ExperimentConfig,
    task: str,
    shrinkers: dict,
    threads: int | None = None,
    key: str = "shrinker",
    frobenius: bool = False,
) -> pd.DataFrame:
    """One row per (replicate, shrinker), rows ordered by replicate then by ``shrinkers``.

    ``shrinkers`` maps a label (stored in column ``key``) to a
    ShrinkageFunction. Replicates run on a thread pool; each one is seeded
    independently so the table does not depend on the thread count.
    """
    if task not in TASKS:
        raise ConfigError(f"task must be one of {TASKS}")
    if not shrinkers:
        raise ConfigError("at least one shrinkage function is needed")
    covariance = config.covariance()
    if covariance.dense is not None:
        covariance.sqrt_matrix  # computed once before the workers share it
    workers = min(worker_count(threads), config.replicates)
    logger.info("running %d %s replicates on %d thread(s)", config.replicates, task, workers)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        batches = pool.map(
            lambda r: _replicate_rows(config, task, shrinkers, key, covariance, frobenius, r),
            range(config.replicates),
        )
        rows = [row for batch in batches for row in batch]
    return pd.DataFrame(rows)


def summarize(frame: pd.DataFrame, by, columns) -> pd.DataFrame:
    """Mean, standard error and count of ``columns`` per group of ``by``.

    Output columns are ``<column>_mean`` and ``<column>_se`` plus ``count``;
    groups keep their first-appearance order.
    """
    by = [by] if isinstance(by, str) else list(by)
    columns = [columns] if isinstance(columns, str) else list(columns)
    missing = [c for c in by + columns if c not in frame.columns]
    if missing:
        raise ConfigError(f"cannot summarize missing columns {missing}")
    grouped = frame.groupby(by, sort=False)[columns]
    means = grouped.mean().add_suffix("_mean")
    counts = grouped.size().rename("count")
    se = grouped.std(ddof=1).div(np.sqrt(counts), axis=0).add_suffix("_se")
    summary = pd.concat([means, se, counts], axis=1).reset_index()
    ordered = by + [f"{c}_{stat}" for c in columns for stat in ("mean", "se")] + ["count"]
    return summary[ordered]
