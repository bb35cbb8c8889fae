class InvalidArgument(ValueError):
    """Raised when an argument violates an operation's precondition."""


class NumericError(ArithmeticError):
    """Raised when a computation produces NaN or Inf."""
