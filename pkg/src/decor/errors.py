"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration value or combination (CLI exit code 2)."""


class ShapeError(ValueError):
    """Array dimensions inconsistent with the declared contract."""


class NumericError(ValueError):
    """Non-finite value where finite arithmetic is required."""


class StateError(RuntimeError):
    """Operation invoked on an object in the wrong state."""


class ParseError(ValueError):
    """Malformed input file; message names the offending line."""


class ValidationError(ValueError):
    """Well-formed input that violates a dataset invariant."""
