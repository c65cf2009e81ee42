"""Exception hierarchy shared by all fracvol modules."""


class FracVolError(Exception):
    """Base class for every error raised by fracvol."""


class DomainError(FracVolError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class DataError(FracVolError, ValueError):
    """Sampled input data is malformed (length mismatch, non-finite, non-monotone)."""


class InfeasibleError(FracVolError, ValueError):
    """A parameter combination violates a feasibility condition of the model."""


class NumericalError(FracVolError, ArithmeticError):
    """A numerical procedure failed (e.g. Cholesky factorization after max jitter)."""
