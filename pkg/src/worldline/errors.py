"""Exception types shared across the package."""


class WorldlineError(Exception):
    """Base class for package errors."""


class InvalidArgument(WorldlineError, ValueError):
    """A caller supplied a value outside an operation's domain."""


class NumericalError(WorldlineError, ArithmeticError):
    """A numerical routine failed to reach its tolerance.

    The best available estimate and the achieved error are attached so that
    callers can decide whether to proceed.
    """

    def __init__(self, message, estimate=None, error=None):
        super().__init__(message)
        self.estimate = estimate
        self.error = error


class UnsupportedConfiguration(WorldlineError, NotImplementedError):
    """The requested combination of options has no implementation."""
