"""Exception types shared by the planning modules."""


class InvalidArgumentError(ValueError):
    """Raised when an input violates an operation's preconditions."""


class NumericalFailureError(ArithmeticError):
    """Raised when a factorization or solve breaks down (e.g. a non-PD pivot)."""
