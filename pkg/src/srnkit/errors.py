"""Exception hierarchy shared by every srnkit module."""


class SrnkitError(Exception):
    """Base class for all library errors."""


class NonFiniteError(SrnkitError, ValueError):
    pass


class DimensionMismatch(SrnkitError, ValueError):
    pass


class ZeroMatrixError(SrnkitError, ValueError):
    pass


class InfeasibleError(SrnkitError, ValueError):
    """Requested stable rank cannot be reached while keeping the top-k spectrum."""


class ConvergenceFailure(SrnkitError, RuntimeError):
    pass


class NoConvergence(SrnkitError, RuntimeError):
    """Power iteration hit its cap; the last estimate is kept on ``state``."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class NotSymmetricError(SrnkitError, ValueError):
    pass


class SmoothingExhausted(SrnkitError, RuntimeError):
    pass


class SamplingDegenerate(SrnkitError, RuntimeError):
    pass


class ZeroMarginError(SrnkitError, ValueError):
    pass


class ZeroOutputError(SrnkitError, ValueError):
    pass


class EmptyAfterSkip(SrnkitError, ValueError):
    pass


class DegenerateData(SrnkitError, ValueError):
    pass


class MatrixFormatError(SrnkitError, ValueError):
    pass
