"""Exception hierarchy. Every error raised by the package derives from ERWError."""


class ERWError(ValueError):
    pass


class EmptySet(ERWError):
    pass


class ZeroVector(ERWError):
    pass


class DuplicateVector(ERWError):
    pass


class OverlapViolation(ERWError):
    """Some odd step is the negation of another odd step (identical or overlapping case)."""


class DimensionMismatch(ERWError):
    pass


class OutOfRange(ERWError):
    pass


class UnknownName(ERWError):
    pass


class LatticeFileError(ERWError):
    pass


class TooShort(ERWError):
    pass


class TooLarge(ERWError):
    pass


class DegenerateParams(ERWError):
    """gamma == 1 or delta == 1: the walk is deterministic after the first step."""


class WrongRegime(ERWError):
    pass


class InvalidTolerance(ERWError):
    pass


class NotConverged(ERWError):
    pass


class DiagonalizationCheckFailed(ERWError):
    pass
