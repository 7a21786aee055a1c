"""
Exceptions raised by the sensing package.

Every error the library raises is a CritmetError, so the CLI can catch one
type and pick an exit code. Input-validation errors are also ValueErrors.
"""


class CritmetError(Exception):
    """Base class for every error raised by this project."""


class InvalidParameters(CritmetError, ValueError):
    """Physical parameters violate their domain (non-positive energies, N < 1, ...)."""


class InvalidRegime(CritmetError, ValueError):
    """Probe precursors outside the dispersive regime (e.g. delta_q <= 0)."""


class NoTransition(CritmetError):
    """epsilon*omega/(4g^2) >= 1: no finite critical temperature exists."""


class NonConvergence(CritmetError):
    """Root finder did not reach its residual tolerance within the iteration cap."""


class QuadratureFailure(CritmetError):
    """Adaptive quadrature exhausted its subdivision cap."""


class DegenerateCurvature(CritmetError):
    """Laplace approximation requested at a flat maximum of Phi."""


class CutoffTooSmall(CritmetError):
    """Fock-space truncation leaves more than the allowed thermal tail weight."""


class DimensionTooLarge(CritmetError):
    """Dense Hilbert-space dimension exceeds the configured cap."""


class SingularDistribution(CritmetError, ValueError):
    """Probability vanishes where its derivative does not: classical FI diverges."""


class SingularBloch(CritmetError, ValueError):
    """Bloch vector on the sphere with a radial derivative: QFI is ill-defined."""


class FlatFunction(CritmetError):
    """Time maximization found no sensitivity at all (F == 0 everywhere)."""


class InsufficientPoints(CritmetError):
    """Too few usable points inside a fit window."""
