"""Exception hierarchy shared by all solver stages."""


class FannoError(Exception):
    """Base class for every error raised by fannoflow."""


class DomainError(FannoError, ValueError):
    """Input outside the physical or mathematical domain of an operation."""


class ShapeError(FannoError, ValueError):
    """Array shape does not match the grid it is supposed to live on."""


class SonicSingularityError(DomainError):
    """Evaluation requested too close to Mach 1."""


class ChokingError(DomainError):
    """The duct is longer than the maximal (choking) length."""

    def __init__(self, message, max_length=None):
        super().__init__(message)
        self.max_length = max_length


class NotSubsonicError(DomainError):
    """A subsonic background was required."""


class DegeneracyError(DomainError):
    """Normal velocity too small, or a sonic denominator in a boundary term."""


class NearResonanceError(FannoError):
    """A Fourier mode violates (or nearly violates) the S-Condition."""

    def __init__(self, message, mode=None, vartheta=None):
        super().__init__(message)
        self.mode = mode
        self.vartheta = vartheta


class DivergenceError(FannoError):
    """The fixed-point iteration stopped contracting."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class StageError(FannoError):
    """Wraps a sub-solver failure with the name of the iteration stage."""

    def __init__(self, stage, cause):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause
