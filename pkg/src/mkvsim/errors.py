"""Exception types shared across the toolkit."""


class MkvError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(MkvError):
    """A configuration or parameter set violates an invariant."""


class NonpositiveDenominator(ValidationError):
    """The porosity-law denominator can reach zero or below on the
    feasible range of the accumulated convolution; the model is ill-posed
    for this parameter set."""


class ParseError(MkvError):
    """Malformed config document; message carries line/field context."""


class PositionOutOfGrid(MkvError):
    """A particle or query point left the safe interior of the grid.
    Raised rather than clamped: silent clamping would corrupt the drift."""


class CFLViolation(MkvError):
    """The requested PDE time step is unstable for the given spacing."""


class MassAtBoundary(MkvError):
    """The PDE density reached the truncated domain boundary; the domain
    is too small for this run."""


class UnequalSupportSizes(MkvError):
    """1D Wasserstein between empirical measures requires equally sized
    samples."""
