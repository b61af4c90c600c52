"""Exception hierarchy. Every error raised by the library derives from
:class:`ProxKdrError`, so callers (and the CLI) can catch one type."""


class ProxKdrError(ValueError):
    """Base class for all library errors."""


class TooFewPoints(ProxKdrError):
    pass


class AllPointsEqual(ProxKdrError):
    pass


class DimensionMismatch(ProxKdrError):
    pass


class NotSymmetric(ProxKdrError):
    pass


class SingularAfterRidge(ProxKdrError):
    pass


class NonpositiveBandwidth(ProxKdrError):
    pass


class DegenerateColumn(ProxKdrError):
    pass


class EmptyGrid(ProxKdrError):
    pass


class MarginalUnderflow(ProxKdrError):
    pass


class SolveFailure(ProxKdrError):
    pass


class NonFiniteWeights(ProxKdrError):
    pass


class ConstantTreatment(ProxKdrError):
    pass


class InvalidSpec(ProxKdrError):
    pass


class LengthMismatch(ProxKdrError):
    pass


class MissingColumnRole(ProxKdrError):
    pass


class NonNumericCell(ProxKdrError):
    pass


class EmptyFile(ProxKdrError):
    pass
