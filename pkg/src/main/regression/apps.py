"""
App configuration for the Regression application.

This module declares the Django AppConfig for the `regression` app, which
computes asymptotic risk and learning curves of shrinkage regression.
"""

from django.apps import AppConfig


class RegressionConfig(AppConfig):
    """Django AppConfig for the `regression` app."""

    default_auto_field = "django.db.models.BigAutoField"
    name = "regression"
