"""Exception hierarchy shared across the package."""


class SepscopeError(Exception):
    """Base class for all errors raised by this package."""


class InvalidStateError(SepscopeError, ValueError):
    """A matrix or coordinate vector violates a structural invariant
    (symmetry, trace, simplex, or correlation-range constraints)."""


class DegenerateStateError(SepscopeError, ValueError):
    """An operation that requires strictly positive diagonal entries was
    given a state with a zero (or negative) diagonal entry."""


class NonPsdError(SepscopeError, ValueError):
    """A positivity-restricted operation was given a non-PSD matrix."""


class QuadratureError(SepscopeError, RuntimeError):
    """Requested quadrature tolerance was not reached within budget.

    Attributes
    ----------
    result : the best estimate achieved, or None.
    """

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class InsufficientSamplesError(SepscopeError, RuntimeError):
    """No samples survived rejection; an estimate cannot be formed."""
