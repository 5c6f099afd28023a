"""Exception types shared across the package."""


class AlphaSqError(Exception):
    """Base class for all library errors."""


class ParseError(AlphaSqError):
    """A point-cloud file could not be parsed."""


class DimensionMismatchError(AlphaSqError):
    """Coordinates, weights or values have inconsistent shapes."""


class NegativeWeightError(AlphaSqError):
    """A carrier measure was given a negative weight."""


class EmptyBallError(AlphaSqError):
    """An average was requested over a ball of zero mass."""


class ResolutionError(AlphaSqError):
    """A radius is below the resolution of the discretization."""


class DegenerateQuadratureError(AlphaSqError):
    """A plane quadrature step is too coarse for the requested ball."""


class CapExceededError(AlphaSqError):
    """An LP instance exceeds the point cap and subsampling is disabled."""


class SolverError(AlphaSqError):
    """The LP solver failed to converge to the requested tolerance."""


class CoverageError(AlphaSqError):
    """The adjacent cube family failed to cover the validation queries."""


class NoQualifyingCubeError(AlphaSqError):
    """No cube in the adjacent family contains the queried ball at
    comparable scale."""


class PreconditionError(AlphaSqError):
    """An operation's documented precondition was violated."""
