"""Exception hierarchy shared across the toolkit."""


class ChamferLabError(Exception):
    """Base class for all toolkit errors."""


class InvalidInputError(ChamferLabError, ValueError):
    """An operation received inputs that violate its contract."""


class NumericalError(ChamferLabError, RuntimeError):
    """A computation failed for numerical reasons."""


class DivergenceError(NumericalError):
    """The optimization objective blew up past the divergence guard."""


class MidpointAmbiguityError(NumericalError):
    """A query point sits exactly where its nearest-neighbor assignment is ambiguous."""


class ConstructionError(NumericalError):
    """A constructive procedure (e.g. bisection) failed to converge."""
