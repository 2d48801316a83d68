"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes, so every failure a user can trigger
should raise one of them rather than a bare ``ValueError``.
"""


class GExpectError(Exception):
    """Base class for all library errors."""


class ValidationError(GExpectError, ValueError):
    """Input violates a documented invariant (CLI exit code 2)."""


class InvariantError(ValidationError):
    pass


class DimensionError(ValidationError):
    pass


class DomainError(ValidationError):
    pass


class ConfigurationError(ValidationError):
    pass


class NumericalBlowUpError(GExpectError, ArithmeticError):
    """Non-finite value produced by the explicit scheme (CLI exit code 3)."""


class ResourceBudgetError(GExpectError, MemoryError):
    """Reachable state count exceeds the configured budget (CLI exit code 4)."""
