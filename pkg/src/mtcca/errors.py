"""Exception hierarchy shared by every mtcca module."""


class MtccaError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatch(MtccaError, ValueError):
    pass


class NonFiniteInput(MtccaError, ValueError):
    pass


class DegenerateWeights(MtccaError):
    """A single observation carries essentially all of the transformed mass."""


class SingularCovariance(MtccaError):
    """Raised when a transformed covariance cannot be factorised.

    ``which`` names the offending block (``"sigma_x"`` or ``"sigma_y"``).
    """

    def __init__(self, which, message=None):
        self.which = which
        super().__init__(message or f"{which} is numerically singular")


class ZeroVariance(MtccaError):
    pass


class ZeroVector(MtccaError, ValueError):
    pass


class DegenerateNull(MtccaError):
    """Too many permutations failed to produce a null statistic."""


class NodeSetMismatch(MtccaError, ValueError):
    pass


class ParseError(MtccaError, ValueError):
    def __init__(self, row, col, message):
        self.row = row
        self.col = col
        super().__init__(f"row {row}, column {col!r}: {message}")


class RowCountMismatch(MtccaError, ValueError):
    pass


class EmptyInput(MtccaError, ValueError):
    pass


class TooManyFailures(MtccaError):
    """More than the tolerated share of Monte-Carlo trials failed."""
