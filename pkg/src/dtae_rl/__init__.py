"""Soft policy optimization with a dual-track advantage estimator."""

from .exceptions import CheckFailure, ConfigError, NumericError, UsageError

__version__ = "0.1.0"

__all__ = ["CheckFailure", "ConfigError", "NumericError", "UsageError", "__version__"]
