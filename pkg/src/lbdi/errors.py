"""Exception hierarchy for the estimation pipeline."""


class LBDIError(Exception):
    """Base class for all package errors."""


class ConsistencyError(LBDIError):
    """A computed probability left [0, 1] by more than round-off."""


class DomainError(LBDIError, ValueError):
    """Input lies outside the domain of an inversion or estimator."""


class SingularInversion(DomainError):
    """The inverse map is singular at this input (q == u, the lambda == mu boundary)."""


class InsufficientData(LBDIError, ValueError):
    """Not enough observed transitions to form an estimate."""


class ZeroLikelihood(LBDIError):
    """An observation has zero probability under the current HMM."""


class ToleranceError(LBDIError):
    """A series solver could not reach the requested tolerance."""


class NonConvergence(LBDIError):
    """An optimizer hit its iteration cap."""


class ParseError(LBDIError, ValueError):
    """Malformed input file."""

    def __init__(self, message, line=None):
        self.line = line
        super().__init__(message if line is None else f"line {line}: {message}")


class GapError(LBDIError, ValueError):
    """Dates in a count file are missing, duplicated or out of order."""

    def __init__(self, message, dates=()):
        self.dates = list(dates)
        super().__init__(message)
