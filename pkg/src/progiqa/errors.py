"""Exception types shared across the toolkit."""


class ToolkitError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(ToolkitError, ValueError):
    """A configuration value or config file is invalid."""


class DegenerateScoreRangeError(ConfigError):
    """Raw score range collapses (raw_min == raw_max), so scaling is undefined."""


class InsufficientDataError(ToolkitError, ValueError):
    """Too few samples for the requested operation (e.g. splitting a 1-item set)."""


class InvalidImageError(ToolkitError, ValueError):
    """An image cannot satisfy the geometry required by the augmentation spec."""


class ScoreOutOfRangeError(ToolkitError, ValueError):
    """A score falls outside the configured binning range."""


class UndefinedCorrelationError(ToolkitError, ValueError):
    """A correlation is undefined because one input vector is constant."""


class DivergenceError(ToolkitError, RuntimeError):
    """Training produced a non-finite loss."""
