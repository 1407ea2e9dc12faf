"""Exception hierarchy shared by all modules."""


class TalbotDecohError(Exception):
    """Base class for all package errors."""


class DomainError(TalbotDecohError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ValidityDomainError(DomainError):
    """An asymptotic formula is evaluated outside its range of validity."""


class AccuracyError(TalbotDecohError, ArithmeticError):
    """A series or quadrature failed to reach its requested tolerance."""


class DegenerateSpectrumError(TalbotDecohError, ValueError):
    """A Fourier spectrum has no mean signal (T_0 == 0)."""


class NoSignalError(DegenerateSpectrumError):
    """A sampled fringe has zero total counts."""


class EmptyDistributionError(TalbotDecohError):
    """No Monte Carlo trajectory reached the detector."""


class FitError(TalbotDecohError, ValueError):
    """An exponential fit could not be performed or showed no decay."""


class ConfigError(TalbotDecohError, ValueError):
    """Invalid configuration text.

    Carries the offending key and, when known, its 1-based line number.
    """

    def __init__(self, message, key=None, line=None):
        self.key = key
        self.line = line
        where = []
        if key is not None:
            where.append(f"key '{key}'")
        if line is not None:
            where.append(f"line {line}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class ValidityWarning(UserWarning):
    """An asymptotic formula is used near the edge of its validity range."""
