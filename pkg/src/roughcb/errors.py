"""Exception and warning types.

Validation problems derive from :class:`ValidationError` (a ``ValueError``),
numerical breakdowns from :class:`NumericalError`.  The CLI maps the two
families to different exit codes.
"""


class RoughCBError(Exception):
    """Base class for all package errors."""


class ValidationError(RoughCBError, ValueError):
    pass


class AlphaOutOfRange(ValidationError):
    pass


class NegativeDrift(ValidationError):
    pass


class NonPositiveScale(ValidationError):
    pass


class InvalidInitialState(ValidationError):
    pass


class InvalidGrid(ValidationError):
    pass


class DomainError(ValidationError):
    pass


class GridMismatch(ValidationError):
    pass


class EmptySample(ValidationError):
    pass


class SubcriticalRateError(ValidationError):
    """The prelimit birth rate ``alpha * (1 - beta * n**-alpha)`` is not positive."""


class NumericalError(RoughCBError, ArithmeticError):
    pass


class ConvergenceFailure(NumericalError):
    pass


class SingularStep(NumericalError):
    pass


class QuadratureFailure(NumericalError):
    pass


class PicardDivergence(NumericalError):
    def __init__(self, message, *, step=None, iterations=None, last_change=None):
        super().__init__(message)
        self.step = step
        self.iterations = iterations
        self.last_change = last_change


class PoleError(NumericalError):
    pass


class MemoryBudgetExceeded(NumericalError):
    pass


class PathBudgetExceeded(NumericalError):
    pass


class DegeneratePath(NumericalError):
    pass


class TruncationTooCoarse(UserWarning):
    """Small-jump truncation level is large compared with the predicted variance."""


class LossOfAccuracy(UserWarning):
    pass
