"""Exception types raised by the library."""


class HouseholderError(ValueError):
    """Base class for invalid inputs to the Householder routines."""


class DimensionMismatchError(HouseholderError):
    pass


class NonFiniteError(HouseholderError):
    pass


class DegenerateVectorError(HouseholderError):
    """A Householder vector has (numerically) zero norm.

    ``chain`` and ``index`` locate the offending vector when known.
    """

    def __init__(self, message, chain=None, index=None):
        super().__init__(message)
        self.chain = chain
        self.index = index


class SingularMatrixError(HouseholderError):
    pass


class PoleError(HouseholderError):
    """Cayley map requested at an eigenvalue of -1."""
