"""Exception hierarchy shared by all wavegram modules."""


class WavegramError(Exception):
    """Base class for every error raised by this package."""


class InvalidPhasePoint(WavegramError, ValueError):
    pass


class DimensionMismatch(WavegramError, ValueError):
    pass


class BadRadii(WavegramError, ValueError):
    pass


class NotSupported(WavegramError, ValueError):
    pass


class NotSubdiagonal(WavegramError, ValueError):
    pass


class NonFiniteCoefficient(WavegramError, ArithmeticError):
    pass


class NotControllable(WavegramError, ValueError):
    pass


class Degenerate(WavegramError, ValueError):
    pass


class EmptyInput(WavegramError, ValueError):
    pass


class BadBlocks(WavegramError, ValueError):
    pass


class CriticalTimeNotFound(WavegramError):
    """The positivity predicate is still false at the upper horizon."""


class Instability(WavegramError, ArithmeticError):
    pass


class CutoffTooSmall(WavegramError, ValueError):
    pass


class DegenerateDenominator(WavegramError, ZeroDivisionError):
    pass


class BadScenario(WavegramError, ValueError):
    """Scenario document failed schema or semantic validation."""
