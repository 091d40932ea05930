"""Exception hierarchy shared across the package."""


class PolyallocError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(PolyallocError):
    pass


class InfeasibleSystem(PolyallocError):
    """The halfspace system admits no point."""


class GenerationFailed(PolyallocError):
    """Random constraint generation exhausted its retry budget."""


class DegenerateHull(PolyallocError):
    """Hull points are affinely dependent beyond tolerance."""


class NumericalFailure(PolyallocError):
    """The LP solver could not certify optimality."""


class OutOfSupport(PolyallocError):
    """A value lies outside the support of its distribution/interval."""


class FitFailed(PolyallocError):
    """Maximum-likelihood fitting diverged."""


class AcceptanceTooLow(PolyallocError):
    """Rejection sampling failed to accept within the try budget."""


class InfeasibleAction(PolyallocError):
    """An action violates the environment's constraint polytope."""


class NonFiniteLoss(PolyallocError):
    """A training update produced a non-finite loss."""
