"""Artifact writers: CSV or JSON tables plus the ``<output>.run.json`` sidecar."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .exceptions import ConfigError

logger = logging.getLogger(__name__)

FORMATS = ("csv", "json")


@dataclass(frozen=True, eq=False)
class Artifact:
    """A result table with optional scalar metadata (JSON output only)."""

    frame: pd.DataFrame
    extras: dict = field(default_factory=dict)


def _plain(value):
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not np.isfinite(value):
        return None
    return value


def sidecar_path(output: Path) -> Path:
    return output.with_name(output.name + ".run.json")


def write_artifact(artifact: Artifact, output: Path, fmt: str) -> Path:
    if fmt not in FORMATS:
        raise ConfigError(f"format must be one of {FORMATS}")
    output = Path(output)
    output.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "csv":
        artifact.frame.to_csv(output, index=False, lineterminator="\n")
    else:
        rows = json.loads(artifact.frame.to_json(orient="records", double_precision=15))
        payload = {"rows": rows, **_plain(artifact.extras)}
        output.write_text(json.dumps(payload, indent=2) + "\n")
    logger.info("artifact written: %s (%d rows)", output, len(artifact.frame))
    return output


def write_sidecar(resolved: dict, output: Path) -> Path:
    path = sidecar_path(Path(output))
    path.write_text(json.dumps(_plain(resolved), indent=2, sort_keys=True) + "\n")
    return path
