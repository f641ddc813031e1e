"""
Django settings for the shrinkage lab project.

The project uses Django for configuration, management commands, form
validation and its test runner; there is no web front end and no database.

For more information on this file, see
https://docs.djangoproject.com/en/5.2/topics/settings/

For the full list of settings and their values, see
https://docs.djangoproject.com/en/5.2/ref/settings/
"""

import os
from pathlib import Path

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent


# SECURITY WARNING: nothing here is served, but Django still requires a key.
SECRET_KEY = os.environ.get(
    "SHRINKAGE_LAB_SECRET_KEY", "shrinkage-lab-local-only-key-not-for-serving"
)

DEBUG = False

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    "core",
    "spectrum",
    "functionals",
    "regression",
    "lda",
    "montecarlo",
]

MIDDLEWARE = []


# Database
# No persistence: every result is an artifact file.

DATABASES = {}


# Internationalization
# https://docs.djangoproject.com/en/5.2/topics/i18n/

LANGUAGE_CODE = "en-us"

TIME_ZONE = "UTC"

USE_I18N = False

USE_TZ = True


# Logging
# https://docs.djangoproject.com/en/5.2/topics/logging/
# One line per stage on standard error.

LOG_LEVEL = os.environ.get("SHRINKAGE_LAB_LOG_LEVEL", "INFO").upper()

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "stage": {
            "format": "{levelname} {name}: {message}",
            "style": "{",
        },
    },
    "handlers": {
        "console": {
            "class": "logging.StreamHandler",
            "stream": "ext://sys.stderr",
            "formatter": "stage",
        },
    },
    "loggers": {
        app: {"handlers": ["console"], "level": LOG_LEVEL, "propagate": False}
        for app in INSTALLED_APPS
    },
}


# Numerical defaults
# Read through core.conf.lab_setting so tests can override them.


def _threads_from_env() -> int:
    raw = os.environ.get("SHRINKAGE_LAB_THREADS", "")
    try:
        return max(1, int(raw))
    except ValueError:
        return max(1, min(8, os.cpu_count() or 1))


SHRINKAGE_LAB = {
    # spectrum solver
    "GRID_SIZE": 512,
    "EPS_START": 1e-1,
    "EPS_STOP": 1e-7,
    "EPS_FACTOR": 10.0,
    "DAMPING": 0.5,
    "FIXED_POINT_MAX_ITER": 2000,
    "NEWTON_MAX_ITER": 60,
    "RESIDUAL_TOL": 1e-10,
    # support detection
    "SUPPORT_SAMPLES": 4000,
    "SUPPORT_MAX_SAMPLES": 400000,
    "GOLDEN_TOL": 1e-8,
    "SUPPORT_TOL": 1e-6,
    # invariant checks on built spectra
    "MASS_TOL": 1e-4,
    # lda quadratic program
    "QP_GRID_SIZE": 256,
    "QP_TOL": 1e-6,
    "QP_MAX_ITER": 200000,
    "PSD_FLOOR_TOL": 1e-8,
    "PSD_FAIL_TOL": 1e-3,
    # curves
    "TIME_MIN": 1e-2,
    "TIME_MAX": 1e3,
    "TIME_POINTS": 40,
    # workers
    "THREADS": _threads_from_env(),
}
