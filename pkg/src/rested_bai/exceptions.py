"""
Error types raised by the rested bandit toolkit.
"""
from typing import Any, List, Optional


class RestedBanditError(Exception):
    """Base class for all toolkit errors."""


class BudgetExhaustedError(RestedBanditError):
    """Raised when a pull is requested after the horizon has been consumed."""


class InsufficientDataError(RestedBanditError, ValueError):
    """Raised when an estimator is asked for more samples than were observed."""


class EvaluationError(RestedBanditError, ValueError):
    """Raised when the evaluator is handed an outcome it cannot score."""


class ConfigError(RestedBanditError, ValueError):
    """Raised when an instance or experiment configuration is malformed."""


class ExperimentIOError(RestedBanditError, OSError):
    """
    Raised when experiment results cannot be written.

    The records computed before the failure are kept on the exception so that
    callers can salvage them.
    """

    def __init__(self, message: str, records: Optional[List[Any]] = None):
        super().__init__(message)
        self.records: List[Any] = list(records or [])
