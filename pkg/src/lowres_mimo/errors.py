"""Exception types raised by the library."""


class CapacityError(ValueError):
    """A requested computation exceeds a configured size limit."""


class NumericError(ArithmeticError):
    """A matrix or intermediate quantity is too ill-conditioned to use."""
