"""Exception types shared across the package."""


class FairGenError(Exception):
    """Base class for all package errors."""


class ConfigError(FairGenError):
    """Invalid configuration value or combination."""


class DomainError(FairGenError):
    """Input outside the declared domain (bounds, box, dimensionality)."""


class DegenerateDataError(FairGenError):
    """Data too degenerate for the requested fit (e.g. zero-variance axis)."""


class UnsupportedConfigError(FairGenError):
    """Configuration valid in general but not supported by this code path."""


class TrainingError(FairGenError):
    """Model training could not be started or completed."""


class EvaluationError(FairGenError):
    """An evaluation protocol could not be carried out."""


class DataFormatError(FairGenError):
    """Persisted file does not match its declared format."""


class NumericError(FairGenError):
    """Numerical failure (singular matrix, non-finite intermediate)."""
