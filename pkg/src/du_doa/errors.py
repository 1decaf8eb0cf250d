"""Exception hierarchy shared by every stage of the pipeline."""

from __future__ import annotations


class DuDoaError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(DuDoaError, ValueError):
    """Invalid parameters, geometry, grid or file contents."""


class ChannelMismatchError(ConfigurationError):
    """Input channel count does not match the array geometry."""


class InsufficientHistoryError(DuDoaError):
    """Fewer frames than the CPSD averaging length were supplied."""


class StateMachineError(DuDoaError, RuntimeError):
    """Tracker operation called in the wrong state."""


class QueryError(DuDoaError, ValueError):
    """Ground-truth query outside the trajectory span."""


class EvaluationError(DuDoaError):
    """Nothing left to score."""
