"""Exception types shared across the package."""

from __future__ import annotations


class FreePoissonError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(FreePoissonError, ValueError):
    """Invalid mathematical domain: bad dimension, bad parameter range."""


class SingularPointError(FreePoissonError, ValueError):
    """Kernel evaluated at (or numerically on top of) its singularity."""


class PreconditionError(FreePoissonError, ValueError):
    """A documented precondition of an operation was not met."""


class AdmissibilityError(FreePoissonError, RuntimeError):
    """Source fails the integrability conditions required by the operation.

    Carries the offending condition report when one is available.
    """

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


class ConfigError(FreePoissonError, ValueError):
    """Malformed run configuration. ``path`` locates the offending field."""

    def __init__(self, message: str, path: str = ""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path
