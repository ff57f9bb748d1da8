"""Exception types shared across the package."""


class FormatError(ValueError):
    """A serialized artifact (corpus file, checkpoint, trial list) is malformed."""


class ValidationError(ValueError):
    """Inputs are structurally readable but violate a documented constraint."""


class NumericError(ArithmeticError):
    """A computation produced or received non-finite values."""
