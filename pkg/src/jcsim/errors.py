"""Exception types shared across the package."""


class JCSimError(Exception):
    """Base class for every error raised by this package."""


class TruncationError(JCSimError):
    """Coherent amplitude too large for the truncated Fock space to represent."""


class DimensionMismatch(JCSimError):
    """Operands live in incompatible spaces."""


class SingularSystem(JCSimError):
    """Sparse factorization of the constrained steady-state system broke down."""


class ResidualTooLarge(JCSimError):
    """Steady-state residual exceeds the requested tolerance after refinement."""


class NotConverged(JCSimError):
    """Time integration reached its horizon without meeting the tolerance."""


class DimensionTooLarge(JCSimError):
    """Problem too large for the dense small-instance solver."""


class DegenerateNullSpace(JCSimError):
    """The generator has no isolated one-dimensional null space."""


class TruncationCapExceeded(JCSimError):
    """Fock truncation hit its cap before the photon number converged.

    Carries the photon-number sequence seen so far for diagnosis.
    """

    def __init__(self, message, nbar_history=None):
        super().__init__(message)
        self.nbar_history = list(nbar_history or [])


class SingularGammaTilde(JCSimError):
    """Mean-field bistability equation undefined: gamma = 0 and dwq = 0."""


class DeltaZero(JCSimError):
    """Kerr state equation undefined at delta = 0; use the neoclassical roots."""


class GridTooCoarse(JCSimError):
    """A detected peak has an indefinite quadratic fit; refine the grid."""


class StepSizeUnderflow(JCSimError):
    """Adaptive integrator could not take a further step."""


class ParseError(JCSimError):
    """Config text could not be parsed; message carries the line number."""


class ValidationError(JCSimError):
    """Config parsed but a key or value is not acceptable."""
