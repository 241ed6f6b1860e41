"""Exception types raised across the package."""


class InvalidArgument(ValueError):
    pass


class CutoffTooSmall(InvalidArgument):
    """The Fock truncation drops more trace than allowed."""


class NumericalPSDViolation(ValueError):
    pass


class DegenerateProjection(RuntimeError):
    """Projection onto a qubit branch carrying (numerically) zero weight."""


class UndefinedMetric(ValueError):
    pass


class InsufficientData(ValueError):
    pass


class ConfigError(ValueError):
    pass
