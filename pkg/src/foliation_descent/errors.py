"""Exception hierarchy shared by all modules."""


class FoliationError(Exception):
    """Base class for every error raised by the package."""


class InputError(FoliationError, ValueError):
    """Malformed or inconsistent input (dimension mismatch, empty sample, ...)."""


class ValidationError(FoliationError):
    """A structural invariant (convexity, nesting, quasiconvexity) failed."""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class DomainError(FoliationError, ValueError):
    """A point lies outside the region where an operation is defined."""


class NumericalError(FoliationError, RuntimeError):
    """An iterative method failed to reach its tolerance."""

    def __init__(self, message, residual=None, context=None):
        super().__init__(message)
        self.residual = residual
        self.context = dict(context or {})


class ProjectionError(NumericalError):
    pass


class DegenerateCurveError(FoliationError, ValueError):
    """The curve has zero length or too few distinct samples."""
