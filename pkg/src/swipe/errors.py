"""Exception types shared across the package."""


class SwipeError(Exception):
    """Base class for all package errors."""


class ParseError(SwipeError):
    """A file could not be parsed; the message names the offending line."""


class ValidationError(SwipeError):
    """Input data violates a documented invariant."""


class ConfigError(SwipeError):
    """A configuration value is out of range or inconsistent."""


class FormatError(SwipeError):
    """A sidecar or checkpoint file does not match its documented layout."""


class TrainingError(SwipeError):
    """Training hit a non-recoverable numeric condition (e.g. non-finite loss)."""
