"""Exception and warning types raised across the package."""


class BCGDError(Exception):
    """Base class for all errors raised by this package."""


class InvalidQuantizerError(BCGDError, ValueError):
    pass


class DegenerateInputError(BCGDError, ValueError):
    """Input for which the quantity is undefined, e.g. an all-zero weight vector."""


class ShapeError(BCGDError, ValueError):
    pass


class StaleCacheError(BCGDError, RuntimeError):
    """A forward cache was used after the network parameters changed."""


class DivergedError(BCGDError, ArithmeticError):
    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class DomainError(BCGDError, ValueError):
    """Argument outside the domain where a closed form is defined."""


class NondifferentiableError(DomainError):
    pass


class StepFailureError(BCGDError, ArithmeticError):
    pass


class InsufficientDataError(BCGDError, ValueError):
    pass


class FormatError(BCGDError, ValueError):
    """Malformed file contents (bad magic, truncation, inconsistent counts)."""


class ConfigError(BCGDError, ValueError):
    pass


class InsufficientSamplesWarning(UserWarning):
    pass
