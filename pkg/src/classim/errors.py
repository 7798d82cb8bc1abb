"""Exception hierarchy shared by every module and mapped to CLI exit codes."""


class ClassimError(Exception):
    """Base class for all library errors."""

    exit_code = 1


class ValidationError(ClassimError, ValueError):
    """Input data violates a documented invariant."""

    exit_code = 1


class UnsupportedDimensionError(ValidationError):
    """A generator was asked for a dimension it has no construction for."""


class SolverError(ClassimError):
    """A numerical routine failed to reach its tolerances.

    ``diagnostics`` carries whatever the routine knew when it gave up
    (residuals, iteration counts, the offending strategy, ...).
    """

    exit_code = 2

    def __init__(self, message, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


class SizingError(ClassimError):
    """A requested computation exceeds a configured size cap."""

    exit_code = 3
