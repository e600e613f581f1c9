"""Exception and warning types shared across the package."""


class SensorGraphError(Exception):
    """Base class for all package errors."""


class AllMissing(SensorGraphError, ValueError):
    pass


class DegenerateSeries(SensorGraphError, ValueError):
    pass


class IrregularCadence(SensorGraphError, ValueError):
    pass


class PeriodTooLong(SensorGraphError, ValueError):
    pass


class InsufficientLength(SensorGraphError, ValueError):
    pass


class EmptyInput(SensorGraphError, ValueError):
    pass


class WarmupNotReached(SensorGraphError, ValueError):
    pass


class ShapeMismatch(SensorGraphError, ValueError):
    pass


class NoPositives(SensorGraphError, ValueError):
    pass


class NonFiniteLoss(SensorGraphError, FloatingPointError):
    pass


class StorageFailure(SensorGraphError, OSError):
    pass


class ConfigError(SensorGraphError, ValueError):
    pass


class DegenerateSeriesWarning(UserWarning):
    """A constant series made a correlation entry undefined; it was set to 0."""


class ZeroRowWarning(UserWarning):
    """A matrix row summed to zero; recovery metrics were set to 0."""

