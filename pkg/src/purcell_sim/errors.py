"""Exception types raised across the package."""


class PurcellSimError(Exception):
    """Base class for all errors raised by purcell_sim."""


class LayoutError(PurcellSimError, ValueError):
    """Operands live on incompatible subsystem layouts or have wrong shapes."""


class SpecError(PurcellSimError, ValueError):
    """A physical parameter set violates its invariants."""


class AssemblyError(PurcellSimError):
    """An internally assembled operator failed a self-consistency check."""


class SolverError(PurcellSimError):
    """A numerical solver did not converge.

    Attributes
    ----------
    residual : float or None
        Last residual norm reached before giving up, when available.
    """

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class DegenerateSteadyStateError(SolverError):
    """The generator has more than one stationary state."""

    def __init__(self, multiplicity, message=None):
        super().__init__(
            message or f"steady state is not unique: kernel dimension {multiplicity}"
        )
        self.multiplicity = multiplicity


class StiffnessError(SolverError):
    """Time stepping collapsed; the problem is too stiff for the requested tolerances."""


class HeraldImpossibleError(PurcellSimError):
    """The conditioning jump has (numerically) zero probability."""


class UndefinedStatisticsError(PurcellSimError):
    """Photon statistics requested for an (almost) empty cavity."""


class PlanError(PurcellSimError, ValueError):
    """A sweep plan is invalid."""
