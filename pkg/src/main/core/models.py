"""Run specification of the ``lab`` management command."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path

from .exceptions import ConfigError
from .export import FORMATS

COMMANDS = (
    "spectrum",
    "regression-curve",
    "risk-surface",
    "training-curve",
    "lda-error",
    "optimal-shrinkage",
    "compare-shrinkers",
    "simulate",
    "estimate-spectrum",
)
TOP_LEVEL_KEYS = {"command", "params", "output", "format", "threads"}


def load_document(path) -> dict:
    """Read a run configuration; an empty file reads as ``{}``."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    if not text.strip():
        return {}
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc.msg} at line {exc.lineno}") from exc


@dataclass(frozen=True)
class RunSpec:
    """One run: a command, its parameters and where the artifact goes."""

    command: str
    params: dict = field(hash=False)
    output: Path
    format: str = "csv"
    threads: int | None = None

    def __post_init__(self) -> None:
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}; expected one of {', '.join(COMMANDS)}")
        if not isinstance(self.params, dict):
            raise ConfigError("params must be a JSON object")
        if self.format not in FORMATS:
            raise ConfigError(f"format must be one of {FORMATS}")
        if self.threads is not None and (isinstance(self.threads, bool) or not isinstance(self.threads, int) or self.threads < 1):
            raise ConfigError("threads must be a positive integer")
        object.__setattr__(self, "output", Path(self.output))

    @classmethod
    def from_payload(cls, payload: dict, **overrides) -> "RunSpec":
        """Build from a run document; non-None ``overrides`` replace top-level keys.

        ``seed`` is not a top-level key: it is written into the simulation
        parameters (``params.experiment.seed`` or ``params.seed``).
        """
        if not isinstance(payload, dict):
            raise ConfigError("the run configuration must be a JSON object")
        extra = set(payload) - TOP_LEVEL_KEYS
        if extra:
            raise ConfigError(f"unknown top-level keys {sorted(extra)}")
        merged = copy.deepcopy(payload)
        seed = overrides.pop("seed", None)
        merged.update({k: v for k, v in overrides.items() if v is not None})
        merged.setdefault("params", {})
        if seed is not None:
            params = merged["params"]
            if isinstance(params, dict) and isinstance(params.get("experiment"), dict):
                params["experiment"]["seed"] = seed
            elif isinstance(params, dict):
                params["seed"] = seed
        for key in ("command", "output"):
            if not merged.get(key):
                raise ConfigError(f"the run configuration needs {key!r}")
        return cls(
            command=merged["command"],
            params=merged["params"],
            output=merged["output"],
            format=merged.get("format", "csv"),
            threads=merged.get("threads"),
        )

    @classmethod
    def from_file(cls, path, **overrides) -> "RunSpec":
        return cls.from_payload(load_document(path), **overrides)

    def resolved(self, params: dict) -> dict:
        """The run document with validated, default-filled parameters."""
        document = {"command": self.command, "params": params, "output": str(self.output), "format": self.format}
        if self.threads is not None:
            document["threads"] = self.threads
        return document
