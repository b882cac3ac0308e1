"""Exception hierarchy shared by all subflow modules."""


class SubflowError(Exception):
    """Base class for all library errors."""


class DimensionError(SubflowError, ValueError):
    """Array shapes are inconsistent with the ambient geometry."""


class CutLocusError(SubflowError):
    """A logarithm or transport was requested across the cut locus."""


class ChartDomainError(SubflowError, ValueError):
    """A chart was evaluated outside of its domain."""


class EmptyNeighborhood(SubflowError):
    """Every kernel value vanished, so no weights can be formed."""


class SingularPointError(SubflowError):
    """The k-th and (k+1)-th eigenvalues coincide at the query point.

    ``step`` is set when the failure happened while integrating a geodesic.
    """

    def __init__(self, message, step=None, gap=None):
        super().__init__(message)
        self.step = step
        self.gap = gap


class DivergenceError(SubflowError):
    """A geodesic left the region supported by the data."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class NoDescentError(SubflowError):
    """Every restart of the log optimization failed its line search."""


class NoSubmanifoldInRange(SubflowError):
    """No submanifold projection is closer than the threshold."""


class CloudFormatError(SubflowError, ValueError):
    """A point-cloud file could not be parsed; ``row`` is 1-based."""

    def __init__(self, message, row=None):
        super().__init__(message if row is None else f"row {row}: {message}")
        self.row = row
