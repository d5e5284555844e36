"""Exception hierarchy shared by all modules."""


class DimerError(Exception):
    """Base class for package errors."""


class DomainError(DimerError, ValueError):
    """Invalid domain description or violated Temperleyan rule."""


class ConfigError(DimerError, ValueError):
    """Malformed experiment configuration."""


class NumericalError(DimerError, ArithmeticError):
    """Numerical failure (singular matrix, drift, non-convergence)."""


class PoleError(NumericalError):
    """Evaluation too close to a pole."""


class PrecisionError(NumericalError):
    """A series did not reach the requested precision."""


class RangeError(DimerError, ValueError):
    """Input outside the attainable range of a fitted parametrization."""
