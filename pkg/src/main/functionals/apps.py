"""
App configuration for the Functionals application.

This module declares the Django AppConfig for the `functionals` app: the
limiting trace functionals M and T of a shrinkage function.
"""

from django.apps import AppConfig


class FunctionalsConfig(AppConfig):
    """Django AppConfig for the `functionals` app."""

    default_auto_field = "django.db.models.BigAutoField"
    name = "functionals"
