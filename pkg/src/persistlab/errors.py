"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of the requested function."""


class ConvergenceError(ArithmeticError):
    """A series or iteration failed to reach its tolerance."""


class EmbeddingError(RuntimeError):
    """No factorization of a covariance matrix could be found."""


class CoverageError(ValueError):
    """A time grid does not cover the range a transform needs."""


class GridTooLargeError(ValueError):
    """The requested grid exceeds the supported number of points."""


class InsufficientDataError(ValueError):
    """Too few usable estimates to fit an exponent."""


class BudgetInfeasibleError(InsufficientDataError):
    """The trial budget yields too few surviving paths for a fit."""
