"""
Exception hierarchy for the GPWPC toolkit.

Every error carries the process exit code that ``main.py`` returns when the
error escapes a study: 2 for configuration problems, 3 for numerical
failures, 4 for exceeded budgets.
"""


class GpwpcError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 3


class ConfigurationError(GpwpcError, ValueError):
    """Invalid study configuration or CLI input."""

    exit_code = 2


class InvalidParameterError(GpwpcError, ValueError):
    """A parameter lies outside its admissible range."""

    exit_code = 2


class SingularPointError(InvalidParameterError):
    """Density evaluated at a point where it is unbounded."""


class InvalidWeightError(InvalidParameterError):
    """Weight family is not monotone along the half-order."""


class NumericalFailureError(GpwpcError, ArithmeticError):
    """An eigen-solve, linear solve or factorization failed."""


class DivergentIntegralError(NumericalFailureError):
    """An integral is infinite or its Monte-Carlo estimate does not settle."""


class FieldOverflowError(NumericalFailureError):
    """The diffusion coefficient exp(b) is not representable."""


class SamplerFailureError(NumericalFailureError):
    """A rejection sampler stalled."""


class CapacityError(GpwpcError, IndexError):
    """Requested degree exceeds the precomputed capacity."""


class IncompleteDataError(GpwpcError, KeyError):
    """Values are missing for some node, point or basis index."""

    def __str__(self):
        # KeyError quotes its message; keep it readable
        return str(self.args[0]) if self.args else ""


class InsufficientDataError(GpwpcError):
    """Not enough usable data points for a fit."""


class BudgetExceededError(GpwpcError):
    """An enumeration or tensor grid is larger than the configured cap."""

    exit_code = 4
