"""Exception hierarchy shared by all modules."""


class RsaError(Exception):
    """Base class for errors raised by this package."""


class InvalidInputError(RsaError, ValueError):
    """Input data or parameters violate a precondition (shapes, ranges, finiteness)."""


class DegenerateSampleError(RsaError):
    """The sample is too small or too collinear for the requested computation."""
