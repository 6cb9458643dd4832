"""Exception hierarchy shared by the solvers and the genetic search."""


class CrackDetectionError(Exception):
    """Base class for all errors raised by this package."""


class TipSingularity(CrackDetectionError):
    """Evaluation point coincides (numerically) with a crack tip."""


class OnCrackError(CrackDetectionError):
    """Evaluation point lies exactly on the crack segment.

    Face values must be requested with an explicit side offset.
    """


class Overflow(CrackDetectionError):
    """A network pre-activation left the safe range of ``exp``."""


class Diverged(CrackDetectionError):
    """Training produced a non-finite loss."""


class EmptySegment(CrackDetectionError):
    """Boundary points were requested for a class with zero length."""


class IllConditioned(CrackDetectionError):
    """Collocation matrix is too ill-conditioned to solve without ridge."""


class DegenerateCrack(CrackDetectionError):
    """Both crack tips coincide."""


class SamplingExhausted(CrackDetectionError):
    """Rejection sampling could not satisfy the search-space constraints."""


class ZeroNormTarget(CrackDetectionError):
    """Measured strains are identically zero; fitness is undefined."""


class EvaluationFailed(CrackDetectionError):
    """Forward evaluation of a candidate crack failed."""


class PopulationCollapse(CrackDetectionError):
    """Too few survivors remain to perform crossover."""


class NotConverged(CrackDetectionError):
    """Search stopped on its generation budget without meeting its criterion.

    The partial result (best individuals and logs) travels with the exception.
    """

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result
