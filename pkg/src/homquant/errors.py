"""Exception hierarchy shared by all homquant modules."""


class HomQuantError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(HomQuantError, ValueError):
    """Non-finite entries, wrong shapes or out-of-domain arguments."""


class InvalidWeightError(InvalidInputError):
    """The weight matrix is not symmetric positive definite."""


class InvalidAngleError(InvalidInputError):
    """Spherical angles outside their admissible ranges."""


class UndefinedAtOriginError(HomQuantError, ValueError):
    """Quantity is undefined at (or numerically indistinguishable from) zero."""


class ControllabilityError(HomQuantError):
    """The pair (A, B) is not controllable."""


class NoSolutionError(HomQuantError):
    """The homogenization equation has no solution within tolerance."""


class HomogenizationSingularError(HomQuantError):
    """G0 - I is singular so K0 cannot be formed."""


class CannotInvertError(HomQuantError):
    """A matrix that must be inverted is numerically singular."""


class NotCertifiedError(HomQuantError):
    """Certificate preconditions (negative W, monotone dilation) are violated."""


class InfeasibleError(HomQuantError):
    """The LMI solver ran out of budget without reaching the required margins.

    ``best_margin`` is the largest min-eigenvalue margin seen over all restarts.
    """

    def __init__(self, message, best_margin=float("nan"), best_point=None):
        super().__init__(message)
        self.best_margin = best_margin
        self.best_point = best_point


class BudgetTooSmallError(InvalidInputError):
    """The bit budget gives fewer than three bins per polar angle."""


class DecodeError(HomQuantError, ValueError):
    """A received code does not correspond to any seed."""


class ConfigurationError(HomQuantError, ValueError):
    """Inconsistent simulation or run configuration."""


class DivergenceError(HomQuantError):
    """The simulated state blew up."""

    def __init__(self, message, time=float("nan")):
        super().__init__(message)
        self.time = time


class InsufficientDataError(HomQuantError, ValueError):
    """Not enough samples for a windowed estimate."""
