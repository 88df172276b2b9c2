class PanSketchError(Exception):
    """Base class for all library errors."""


class InputError(PanSketchError, ValueError):
    """An update or argument is outside its valid domain."""


class ModeViolation(InputError):
    """A negative delta reached a cash-register-only structure."""


class ConfigError(PanSketchError, ValueError):
    """An estimator configuration is missing or inconsistent."""


class NumericError(PanSketchError, ArithmeticError):
    """A computation produced a non-finite value."""


class SnapshotError(PanSketchError, ValueError):
    """A snapshot could not be decoded or does not match its target."""


class UndefinedStatistic(PanSketchError, ValueError):
    """The requested statistic is undefined for the current stream."""
