"""
App configuration for the Core application.

The core app hosts the `lab` management command, run-spec validation,
artifact export and the error types shared by the numerical apps.
"""

from django.apps import AppConfig


class CoreConfig(AppConfig):
    """Django AppConfig for the `core` app."""

    default_auto_field = "django.db.models.BigAutoField"
    name = "core"
    verbose_name = "Shrinkage lab core"
