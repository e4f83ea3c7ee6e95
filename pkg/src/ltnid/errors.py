"""Exception hierarchy for ltnid."""


class LtnError(Exception):
    """Base class for all ltnid errors."""


class DataError(LtnError, ValueError):
    """Malformed, empty or inconsistent input data."""


class RankDeficiencyError(LtnError):
    """A least-squares operator is numerically rank deficient.

    ``segment`` identifies where it happened: a ``(psi_left, psi_right)``
    tuple for an open segment, a float for a boundary point, or None.
    """

    def __init__(self, message, segment=None, ratio=None):
        super().__init__(message)
        self.segment = segment
        self.ratio = ratio


class PartitionError(LtnError):
    """The critical-point search exceeded its theoretical iteration bound."""


class SolverError(LtnError):
    """An iterative solver failed to converge."""


class InfeasibleDataError(LtnError):
    """The data admit no feasible alpha in (0, 1]."""
