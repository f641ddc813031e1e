"""
App configuration for the Monte Carlo application.

This module declares the Django AppConfig for the `montecarlo` app:
finite-sample simulation used to validate the asymptotic formulas.
"""

from django.apps import AppConfig


class MontecarloConfig(AppConfig):
    """Django AppConfig for the `montecarlo` app."""

    default_auto_field = "django.db.models.BigAutoField"
    name = "montecarlo"
    verbose_name = "Monte Carlo"
