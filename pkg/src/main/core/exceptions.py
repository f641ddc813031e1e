"""Error types shared by every app.

Contains:
- ShrinkageLabError: base class, carries the process exit code
- ConfigError: invalid parameters or run configuration (exit 2)
- NumericalError and its subclasses (exit 3)
"""


class ShrinkageLabError(Exception):
    """Base class for errors raised by the lab."""

    exit_code = 1
    kind = "error"

    def to_payload(self) -> dict:
        return {"error": self.kind, "detail": str(self)}


class ConfigError(ShrinkageLabError, ValueError):
    exit_code = 2
    kind = "config"


class NumericalError(ShrinkageLabError, ArithmeticError):
    """A computation could not produce a trustworthy number."""

    exit_code = 3
    kind = "numerical"


class ConvergenceError(NumericalError):
    """An iteration stopped before reaching its tolerance.

    The last residual is kept so callers can report how far off it was.
    """

    kind = "convergence"

    def __init__(self, message: str, residual: float = float("nan")):
        super().__init__(f"{message} (last residual {residual:.3e})")
        self.residual = residual


class DomainError(NumericalError):
    """Arguments outside the region where a formula applies."""

    kind = "domain"


class EvaluationError(NumericalError):
    """A shrinkage function could not be evaluated where it is needed."""

    kind = "evaluation"


class PreconditionError(NumericalError):
    kind = "precondition"


class SampleSizeError(NumericalError):
    kind = "sample_size"
