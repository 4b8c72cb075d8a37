"""Exception hierarchy."""


class PMGalerkinError(Exception):
    """Base class for all package errors."""


class QuadratureTooCoarse(PMGalerkinError):
    """The quadrature rule does not keep the basis orthonormal."""


class RankDeficient(QuadratureTooCoarse):
    """More basis polynomials than quadrature points."""


class PointCapExceeded(PMGalerkinError):
    """Tensor rule would exceed the configured point cap."""


class CapExceeded(PMGalerkinError):
    """Dense assembly requested beyond the configured size cap."""


class MissingCapability(PMGalerkinError):
    """The parameterized system cannot provide what was asked (e.g. assembly)."""


class NotSymmetric(PMGalerkinError):
    """Operation requires a system declared symmetric."""


class SingularPreconditioner(PMGalerkinError):
    """Factorization of the preconditioner matrix failed."""


class SystemEvaluationError(PMGalerkinError):
    """A system evaluation failed at a specific parameter point."""

    def __init__(self, point, cause):
        self.point = point
        self.cause = cause
        super().__init__(f"system evaluation failed at {list(point)}: {cause!r}")


class SolverError(PMGalerkinError):
    """Base for Krylov failures; carries the partial solution if any."""

    def __init__(self, message, solution=None):
        super().__init__(message)
        self.solution = solution


class MaxIterExceeded(SolverError):
    pass


class Breakdown(SolverError):
    pass


class NonFiniteEncountered(SolverError):
    pass


class ConfigError(PMGalerkinError):
    pass
