"""Exception hierarchy shared by all qgate_bench modules."""


class QGateError(Exception):
    """Base class for every error raised by this package."""


class DimensionMismatch(QGateError, ValueError):
    pass


class NonUnitaryInput(QGateError, ValueError):
    pass


class InvalidState(QGateError, ValueError):
    """A matrix failed the density-matrix checks (hermiticity, trace, positivity)."""


class LeakageDominates(QGateError, ValueError):
    pass


class FluxOutOfRange(QGateError, ValueError):
    pass


class TimeOutOfRange(QGateError, ValueError):
    pass


class ResonantDenominator(QGateError, ArithmeticError):
    pass


class InvalidNoise(QGateError, ValueError):
    pass


class NegativeSigma(QGateError, ValueError):
    pass


class IntegrationFailure(QGateError, RuntimeError):
    pass


class InvariantViolation(QGateError, RuntimeError):
    pass


class IllConditionedInversion(QGateError, RuntimeError):
    pass


class NoOscillationFound(QGateError, RuntimeError):
    pass


class FitFailure(QGateError, RuntimeError):
    pass


class InsufficientData(QGateError, ValueError):
    pass


class BackendError(QGateError, RuntimeError):
    pass


class ConfigError(QGateError, ValueError):
    pass


class ConfigNotFound(ConfigError, FileNotFoundError):
    pass
