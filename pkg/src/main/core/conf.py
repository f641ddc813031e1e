"""Access to the SHRINKAGE_LAB numerical defaults in settings."""

from django.conf import settings
from django.test import override_settings

from .exceptions import ConfigError


def lab_setting(name: str):
    """Return one entry of ``settings.SHRINKAGE_LAB``."""
    try:
        return settings.SHRINKAGE_LAB[name]
    except KeyError as exc:
        raise ConfigError(f"unknown lab setting {name!r}") from exc


def worker_count(override: int | None = None) -> int:
    """Thread count for parallel work; ``override`` wins over settings."""
    if override is not None:
        if int(override) < 1:
            raise ConfigError("thread count must be at least 1")
        return int(override)
    return int(lab_setting("THREADS"))


class override_lab(override_settings):
    """Override individual SHRINKAGE_LAB entries, e.g. ``@override_lab(GRID_SIZE=128)``.

    The merged dictionary is built when the override is enabled, so it
    decorates test methods and works as a context manager.
    """

    def __init__(self, **values):
        self.lab_values = values
        super().__init__()

    def enable(self):
        self.options = {"SHRINKAGE_LAB": {**settings.SHRINKAGE_LAB, **self.lab_values}}
        super().enable()
