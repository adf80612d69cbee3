class ConfigError(ValueError):
    """Invalid configuration, shape or argument."""


class NumericError(FloatingPointError):
    """A computation produced NaN/Inf."""


class UsageError(RuntimeError):
    """API used out of order, e.g. stepping a finished episode."""


class CheckFailure(AssertionError):
    """A numerical verification did not hold at its tolerance."""
