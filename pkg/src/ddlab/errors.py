class UsageError(ValueError):
    """Raised when an operation is called outside its preconditions."""


class NumericError(FloatingPointError):
    """Raised when a computation produces or receives non-finite values."""
