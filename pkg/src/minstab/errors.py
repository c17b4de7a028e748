"""Exception types shared across the package."""


class MinstabError(Exception):
    """Base class for all package-specific errors."""


class InvalidInput(MinstabError, ValueError):
    """A documented precondition on the inputs does not hold."""


class NonFinite(InvalidInput):
    """Input contains NaN or infinity."""


class Degenerate(MinstabError):
    """Polynomial is identically zero or its leading coefficient vanishes."""


class NotSPD(MinstabError):
    """Matrix expected to be symmetric positive definite is not."""


class AtInfinity(MinstabError):
    """A world point projects to infinity (third homogeneous coordinate ~ 0)."""


class SameCenter(MinstabError):
    """The two cameras share a center; no epipolar geometry exists."""


class NotEssential(MinstabError):
    """Matrix fails the equal-singular-value test for calibrated epipolar models."""


class OnBaseline(MinstabError):
    """Backprojection rays coincide; triangulation is undetermined."""


class NoValidPose(MinstabError):
    """No pose candidate passes the depth-consistency filter."""


class ChartFailure(MinstabError):
    """No coordinate chart yields a well-conditioned normalizing transform."""


class RankDeficientData(MinstabError):
    """Correspondence data is degenerate (constraint matrix loses rank)."""


class EliminationFailure(MinstabError):
    """Pivot breakdown in the polynomial elimination step."""


class EmptyCandidates(InvalidInput):
    """A nonempty candidate list was required."""


class SamplingExhausted(MinstabError):
    """Rejection sampling hit its retry budget."""


class NoHypothesis(MinstabError):
    """Every robust-estimation iteration was rejected or failed."""


class DegenerateFixedData(MinstabError):
    """Fixed correspondences for a curve scan are degenerate."""


class EverywhereIllPosed(MinstabError):
    """The instability curve degenerates to the whole plane (zero polynomial)."""
