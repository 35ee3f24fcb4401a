"""Exception hierarchy for optidamp."""


class OptiDampError(Exception):
    """Base class for all package errors."""


class InputError(OptiDampError, ValueError):
    """Invalid user input (matrices, parameters, positions, config)."""


class StructuralError(OptiDampError):
    """Internal damping is not simultaneously diagonalizable with M and K."""


class NumericalError(OptiDampError):
    """A numerical kernel failed or produced an unusable result."""


class StabilityError(NumericalError):
    """A(nu) is not asymptotically stable.

    Raised with the spectral abscissa and the offending damping vector so
    callers can decide to impose a lower bound ``d`` or reject a trial point.
    """

    def __init__(self, message, abscissa=None, nu=None):
        super().__init__(message)
        self.abscissa = abscissa
        self.nu = nu


class NearDefectiveError(NumericalError):
    """A(nu) is (numerically) not diagonalizable."""


class BasePointError(NumericalError):
    """The expansion point nu=0 cannot be used (A(0) unstable)."""


class DefectiveBaseError(BasePointError):
    """A(0) is defective (gamma_j == 2 omega_j for some mode)."""


class LineSearchError(NumericalError):
    """The nonmonotone line search failed to find an acceptable step."""
