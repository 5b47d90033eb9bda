"""Error handling for elephantlab.

This module defines custom exceptions and error handling utilities.
"""


class ElephantLabError(Exception):
    """Base exception for all elephantlab errors."""
    pass


class ConfigError(ElephantLabError):
    """Application configuration related errors."""
    pass


class ValidationError(ElephantLabError):
    """Experiment configuration validation errors."""
    pass


class ShapeError(ElephantLabError):
    """Dimension mismatch between arrays or layers."""
    pass


class InvalidInputError(ElephantLabError):
    """Numerically invalid input to an operation."""
    pass


class ParameterError(ElephantLabError):
    """Activation or optimizer parameter outside its admissible range."""
    pass


class SpecError(ElephantLabError):
    """Inconsistent network or task specification."""
    pass


class UsageError(ElephantLabError):
    """An operation was called in a state that does not allow it."""
    pass


class NonFiniteGradientError(ElephantLabError):
    """A gradient contained NaN or infinite values."""

    def __init__(self, parameter: str):
        self.parameter = parameter
        super().__init__(f"Non-finite gradient for parameter '{parameter}'")


class DegenerateNetworkError(ElephantLabError):
    """The network produces a zero kernel where a positive one is required."""
    pass


class DiagnosticsError(ElephantLabError):
    """Diagnostics could not be computed from the given samples."""
    pass


class DataFormatError(ElephantLabError):
    """Malformed dataset file."""
    pass


class DataFetchError(ElephantLabError):
    """Dataset download or checksum verification failed."""
    pass


class BufferNotReady(ElephantLabError):
    """Replay buffer holds fewer transitions than requested."""
    pass


def handle_error(error: Exception, logger=None) -> None:
    """Handle an error by logging it.

    Args:
        error: The exception to handle
        logger: Optional logger instance to use
    """
    from .logging import logger as default_logger
    log = logger or default_logger

    if isinstance(error, ElephantLabError):
        log.error(str(error))
    else:
        log.exception("An unexpected error occurred")
