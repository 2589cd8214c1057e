"""Exception hierarchy shared by all modules."""


class CurvedFlatsError(Exception):
    """Base class for every error raised by this package."""


class DimensionMismatch(CurvedFlatsError, ValueError):
    pass


class NotInRealForm(CurvedFlatsError, ValueError):
    pass


class NotInU1(CurvedFlatsError, ValueError):
    pass


class DegenerateForm(CurvedFlatsError, ValueError):
    pass


class UnknownPair(CurvedFlatsError, KeyError):
    pass


class GridTooSmall(CurvedFlatsError, ValueError):
    pass


class GridMismatch(CurvedFlatsError, ValueError):
    pass


class WrongValueSpace(CurvedFlatsError, ValueError):
    pass


class StepRejected(CurvedFlatsError, RuntimeError):
    pass


class SingularFrame(CurvedFlatsError, ValueError):
    pass


class EvaluationFailure(CurvedFlatsError, RuntimeError):
    pass


class RealityUnsolvable(CurvedFlatsError, ValueError):
    pass


class FactorizationSingular(CurvedFlatsError, RuntimeError):
    """The residue system is too ill-conditioned at a grid node."""

    def __init__(self, message, cond=None, node=None):
        super().__init__(message)
        self.cond = cond
        self.node = node


class SpaceViolation(CurvedFlatsError, ValueError):
    pass


class DepthOverflow(CurvedFlatsError, ValueError):
    pass


class NonRegularBasis(CurvedFlatsError, ValueError):
    pass


class UnsupportedRank(CurvedFlatsError, ValueError):
    pass


class NotIntegral(CurvedFlatsError, ValueError):
    pass


class InvalidFlag(CurvedFlatsError, ValueError):
    pass


class ProbeFailed(CurvedFlatsError, RuntimeError):
    pass


class ConfigError(CurvedFlatsError, ValueError):
    """Invalid run configuration; ``field`` names the offending entry."""

    def __init__(self, message, field=None):
        if field:
            message = f"{field}: {message}"
        super().__init__(message)
        self.field = field
