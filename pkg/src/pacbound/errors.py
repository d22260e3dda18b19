"""Exception hierarchy shared by every module."""


class PacBoundError(ValueError):
    """Base class for all errors raised by pacbound."""


class InvalidInputError(PacBoundError):
    pass


class DimensionError(InvalidInputError):
    """Dimension mismatch, or a dimension below what a bound requires."""


class DegenerateEnvelopeError(PacBoundError):
    """The envelope K(h) vanishes, so the normalised self-bounding map is undefined."""


class DivergentMomentError(PacBoundError):
    """A prior exponential moment is infinite (or overflowed during estimation)."""


class SaturationError(PacBoundError, OverflowError):
    """A closed-form value overflows double precision."""

    def __init__(self, message, exponent=None):
        super().__init__(message)
        self.exponent = exponent


class SingularInputError(PacBoundError):
    pass


class EvaluationError(PacBoundError):
    """A Monte-Carlo integrand returned a non-finite value."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class ConvergenceError(PacBoundError):
    def __init__(self, message, grad_norm=None):
        super().__init__(message)
        self.grad_norm = grad_norm


class NoFeasiblePointError(PacBoundError):
    pass
