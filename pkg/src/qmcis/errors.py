"""Exception hierarchy shared by every module of the package."""


class QmcisError(Exception):
    """Base class for all package errors."""


class DomainError(QmcisError, ValueError):
    """Argument outside the mathematical domain of a function."""


class NotPositiveDefinite(QmcisError, ValueError):
    """Cholesky pivot fell below tolerance."""


class SingularHessian(QmcisError):
    """Newton system could not be formed (non-finite Hessian)."""


class ToleranceNotMet(QmcisError):
    """Quadrature finished without reaching the requested accuracy."""

    def __init__(self, message, estimate=float("nan"), error=float("nan")):
        super().__init__(message)
        self.estimate = estimate
        self.error = error


class Diverged(QmcisError):
    """An improper integral does not converge (ill-defined RKHS)."""


class IllDefinedScheme(QmcisError, ValueError):
    """Weight scheme parameters violate the well-definedness condition."""


class InsufficientData(QmcisError, ValueError):
    """Too few usable points for a regression."""


class ModeNotFound(QmcisError):
    """Newton iteration for the proposal centre did not converge."""


class IntegrandOverflow(QmcisError):
    """Log of the transformed integrand exceeded the double range guard."""

    def __init__(self, message, log_value, shift=None, point=None):
        super().__init__(message)
        self.log_value = log_value
        self.shift = shift
        self.point = point


class ConfigError(QmcisError, ValueError):
    """Invalid experiment configuration."""
