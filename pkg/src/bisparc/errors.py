"""Exception types shared across the simulator."""


class BisparcError(Exception):
    """Base class for all simulator errors."""


class DimensionError(BisparcError, ValueError):
    """Array shapes or scenario dimensions violate a constraint."""


class LengthError(BisparcError, ValueError):
    """A bit vector has the wrong length."""


class DegenerateError(BisparcError, ArithmeticError):
    """A transmit signal has zero energy and cannot be power-normalized."""


class NumericalError(BisparcError, ArithmeticError):
    """A message-passing recursion produced non-finite values."""

    def __init__(self, message, iteration=None):
        if iteration is not None:
            message = f"{message} (iteration {iteration})"
        super().__init__(message)
        self.iteration = iteration


class EmptyTruthError(BisparcError, ValueError):
    """PUPE requested for a trial with no transmitted messages."""
