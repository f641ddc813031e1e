"""
App configuration for the Spectrum application.

This module declares the Django AppConfig for the `spectrum` app, which
solves the generalized Marchenko-Pastur equation for a population spectrum.
"""

from django.apps import AppConfig


class SpectrumConfig(AppConfig):
    """Django AppConfig for the `spectrum` app."""

    default_auto_field = "django.db.models.BigAutoField"
    name = "spectrum"
