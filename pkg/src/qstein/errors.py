"""Exception hierarchy shared by every module."""


class QSteinError(Exception):
    """Base class for all package errors."""


class CapExceeded(QSteinError):
    """A dense dimension or enumeration size would exceed the configured cap."""


class BadSubsystem(QSteinError, ValueError):
    pass


class DimensionMismatch(QSteinError, ValueError):
    pass


class NotPSD(QSteinError, ValueError):
    pass


class NotDensity(QSteinError, ValueError):
    pass


class EigFailure(QSteinError, ArithmeticError):
    pass


class NoFeasibleTest(QSteinError, RuntimeError):
    """Raised only on internal inconsistency: E = I is always feasible."""


class UnsupportedFamily(QSteinError, ValueError):
    pass


class ConfigError(QSteinError, ValueError):
    """Scenario or harness configuration problem; message names the location."""
