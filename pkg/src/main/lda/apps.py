from django.apps import AppConfig


class LdaConfig(AppConfig):
    """Django AppConfig for the `lda` app (asymptotic LDA error and optimal shrinkage)."""

    default_auto_field = "django.db.models.BigAutoField"
    name = "lda"
    verbose_name = "Linear discriminant analysis"
