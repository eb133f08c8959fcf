"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Malformed document, invalid tree, or inconsistent data/shape."""


class NumericsError(RuntimeError):
    """Numeric failure: divergence, non-finite values, failed gradient check."""
