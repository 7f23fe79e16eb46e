"""Exception types shared across the package."""


class EcanError(Exception):
    """Base class for all errors raised by ecan."""


class ConfigError(EcanError, ValueError):
    """Invalid hyperparameter, layer spec or run configuration."""


class DimensionError(EcanError, ValueError):
    """Tensor or corpus shapes do not line up."""


class DataError(EcanError, ValueError):
    """Labels or sample values outside their allowed range."""


class UsageError(EcanError, ValueError):
    """Operation called on an input it does not accept (e.g. eval on unlabeled data)."""


class FormatError(EcanError, ValueError):
    """A model or corpus file could not be parsed.

    ``location`` is a character offset for model files and a 1-based line
    number for corpus files.
    """

    def __init__(self, message, location=None):
        if location is not None:
            message = f"{message} (at {location})"
        super().__init__(message)
        self.location = location


class NumericError(EcanError, ArithmeticError):
    """A computation produced NaN/Inf or hit a degenerate case."""


class DegenerateFeatureError(NumericError):
    """A feature row has (near) zero norm and cannot be normalized."""
