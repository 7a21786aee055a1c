"""
Dicke Model Thermodynamics - critical temperature, order parameter, photon moments.

The Dicke model couples N two-level atoms (splitting epsilon) to one cavity
mode (frequency omega) with strength g. In the high-temperature
coherent-state treatment the partition function becomes

    Z_D = sqrt(N / (pi beta omega)) * integral dz exp(N Phi(z))
    Phi(z) = -beta omega z^2 + ln[2 cosh(beta/2 sqrt(epsilon^2 + 16 g^2 z^2))]

Two ways to evaluate averages are provided:

1. Closed form (thermodynamic limit): Laplace's method around the maximum
   z0 of Phi. Cheap, exact as N -> infinity, but the Normal phase (z0 = 0)
   has no g-dependence at all.
2. Quadrature (finite N): integrate against exp(N Phi(z)) directly. Smooth
   through the transition and g-sensitive in both phases.

Units: hbar = k_B = 1, energies in units of epsilon in every example.

Sign conventions worth knowing:
- The free energy per atom is printed as f = Phi(z0), although the definition
  f = -(1/N beta) ln Z gives -Phi(z0)/beta. Both are available through
  free_energy_per_atom(convention=...).
- The closed-form Normal-phase occupancy is 1/(2 beta omega). The quadrature
  path keeps the Gaussian fluctuation N<z^2> that the closed form drops; as
  g -> 0 it returns the Bose value 1/(beta omega).
"""

import logging
import math
import numbers
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, Optional

import numpy as np
from scipy import integrate, optimize, special

from sensing.errors import (
    DegenerateCurvature,
    InvalidParameters,
    NoTransition,
    NonConvergence,
    QuadratureFailure,
)
from utils.numerics import central_difference, ln2cosh, sech2

logger = logging.getLogger(__name__)

# Order-parameter root finding
BISECTION_TOL = 1e-12       # |residual| of the order-parameter equation
BISECTION_MAX_ITER = 200

# Finite-N quadrature
QUAD_REL_TOL = 1e-10
QUAD_SUBDIVISION_CAP = 200
PEAK_TRUNCATION = 1e-16     # integrand cut where it drops below this fraction of its peak

# Laplace approximation
CURVATURE_FLOOR = 1e-12


class Phase(str, Enum):
    NORMAL = 'normal'
    SUPERRADIANT = 'superradiant'


class MomentMethod(str, Enum):
    """How photon moments (and their derivatives) are evaluated."""
    CLOSED_FORM = 'closed'
    QUADRATURE = 'quadrature'
    FINITE_DIFFERENCE = 'finite_difference'
    EXACT = 'exact'  # truncated exact diagonalization, see probe.exact_photon_moments


@dataclass(frozen=True)
class DickeParams:
    """
    Physical parameters of the Dicke model plus the bath inverse temperature.

    Attributes:
        epsilon: atomic transition frequency (> 0)
        omega: cavity frequency (> 0)
        g: atom-cavity coupling (> 0)
        n_atoms: number of atoms N (>= 1)
        beta: inverse temperature (> 0)
    """
    epsilon: float
    omega: float
    g: float
    n_atoms: int
    beta: float

    def __post_init__(self):
        for name in ('epsilon', 'omega', 'g', 'beta'):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, numbers.Real) or not (math.isfinite(value) and value > 0):
                raise InvalidParameters(f"{name} must be a positive finite number, got {value!r}")
        if isinstance(self.n_atoms, bool) or int(self.n_atoms) != self.n_atoms or self.n_atoms < 1:
            raise InvalidParameters(f"n_atoms must be a positive integer, got {self.n_atoms!r}")
        object.__setattr__(self, 'n_atoms', int(self.n_atoms))

    @property
    def coupling_ratio(self) -> float:
        """epsilon*omega / (4 g^2); a finite critical temperature needs this < 1."""
        return self.epsilon * self.omega / (4.0 * self.g ** 2)

    @property
    def superradiant_capable(self) -> bool:
        return self.g > 0.5 * math.sqrt(self.epsilon * self.omega)

    def with_beta(self, beta: float) -> 'DickeParams':
        return replace(self, beta=beta)

    def with_beta_ratio(self, ratio: float) -> 'DickeParams':
        """Same model at beta = ratio * beta_c."""
        return replace(self, beta=ratio * critical_beta(self))


@dataclass(frozen=True)
class OrderParameterSolution:
    """
    Saddle point of Phi.

    eta is None in the Normal phase. residual is |(eps omega/4g^2) eta - tanh(beta eta eps/2)|.
    """
    phase: Phase
    eta: Optional[float]
    z0: float
    residual: float


@dataclass(frozen=True)
class PhotonMoments:
    """
    <n>, <n^2> and their partial derivatives with respect to g and omega.

    Derivatives are NaN when the method that produced the moments does not
    provide them (the exact small-N model).
    """
    n_mean: float
    n2_mean: float
    dg_n: float
    dg_n2: float
    dom_n: float
    dom_n2: float
    method: MomentMethod

    @property
    def variance(self) -> float:
        return self.n2_mean - self.n_mean ** 2

    @property
    def variance_ok(self) -> bool:
        return self.variance >= 0.0


# ============================================================
# Critical temperature and order parameter
# ============================================================

def critical_beta(p: DickeParams) -> float:
    """
    Inverse critical temperature beta_c = (2/epsilon) artanh(epsilon omega / 4g^2).

    Raises:
        NoTransition: if epsilon*omega/(4g^2) >= 1
    """
    ratio = p.coupling_ratio
    if ratio >= 1.0:
        raise NoTransition(
            f"epsilon*omega/(4g^2) = {ratio:.6g} >= 1: no finite critical temperature "
            f"(need g > {0.5 * math.sqrt(p.epsilon * p.omega):.6g})"
        )
    return (2.0 / p.epsilon) * math.atanh(ratio)


def solve_order_parameter(p: DickeParams,
                          tol: float = BISECTION_TOL,
                          max_iter: int = BISECTION_MAX_ITER) -> OrderParameterSolution:
    """
    Solve the order-parameter equation (eps omega/4g^2) eta = tanh(beta eta eps/2).

    Below beta_c (or without any transition) the only saddle is z0 = 0.
    At beta == beta_c the root is eta = 1, z0 = 0. Above beta_c eta is found
    by bisection on [1, 4g^2/(eps omega)]: the mismatch is negative at eta = 1
    and non-negative at the upper end, so the bracket always straddles the root.

    Returns:
        OrderParameterSolution

    Raises:
        NonConvergence: if the residual tolerance is not reached within max_iter

    Example:
        sol = solve_order_parameter(p.with_beta_ratio(1.2))
        # sol.phase == Phase.SUPERRADIANT, sol.z0 > 0
    """
    try:
        beta_c = critical_beta(p)
    except NoTransition:
        return OrderParameterSolution(Phase.NORMAL, None, 0.0, 0.0)

    if p.beta < beta_c:
        return OrderParameterSolution(Phase.NORMAL, None, 0.0, 0.0)

    a = p.coupling_ratio
    b = 0.5 * p.beta * p.epsilon

    def mismatch(eta: float) -> float:
        return a * eta - math.tanh(b * eta)

    # Degenerate point: continuity at the transition
    if p.beta == beta_c or mismatch(1.0) >= 0.0:
        return OrderParameterSolution(Phase.SUPERRADIANT, 1.0, 0.0, abs(mismatch(1.0)))

    lo, hi = 1.0, 1.0 / a
    if mismatch(hi) <= 0.0:
        # tanh saturated to 1 in double precision: the root sits on the bracket edge
        eta = hi
    else:
        eta, info = optimize.bisect(mismatch, lo, hi, xtol=1e-15, maxiter=max_iter,
                                    full_output=True, disp=False)
        if not info.converged:
            raise NonConvergence(f"bisection did not converge in {max_iter} iterations ({info.flag})")

    residual = abs(mismatch(eta))
    if residual > tol:
        raise NonConvergence(f"order-parameter residual {residual:.3e} exceeds tolerance {tol:.1e}")

    z0 = p.epsilon * math.sqrt(max(eta ** 2 - 1.0, 0.0)) / (4.0 * p.g)
    return OrderParameterSolution(Phase.SUPERRADIANT, eta, z0, residual)


# ============================================================
# Phi and the quantities derived from the saddle point
# ============================================================

def phi(z, p: DickeParams):
    """Phi(z) = -beta omega z^2 + ln[2 cosh(beta/2 sqrt(eps^2 + 16 g^2 z^2))]. Vectorized."""
    z = np.asarray(z, dtype=float)
    root = np.sqrt(p.epsilon ** 2 + 16.0 * p.g ** 2 * z ** 2)
    out = -p.beta * p.omega * z ** 2 + ln2cosh(0.5 * p.beta * root)
    return out if out.ndim else float(out)


def phi_second_derivative(z, p: DickeParams):
    """Analytic d^2 Phi / dz^2. At z = 0 it equals -2 beta omega + 8 beta g^2 tanh(beta eps/2)/eps."""
    z = np.asarray(z, dtype=float)
    g2 = p.g ** 2
    root = np.sqrt(p.epsilon ** 2 + 16.0 * g2 * z ** 2)
    u = 0.5 * p.beta * root
    th = np.tanh(u)
    bracket = th / root + 8.0 * p.beta * g2 * z ** 2 * sech2(u) / root ** 2 - 16.0 * g2 * z ** 2 * th / root ** 3
    out = -2.0 * p.beta * p.omega + 8.0 * p.beta * g2 * bracket
    return out if out.ndim else float(out)


def free_energy_per_atom(p: DickeParams, convention: str = 'printed') -> float:
    """
    Free energy per atom in the thermodynamic limit.

    Args:
        p: model parameters
        convention: 'printed' returns Phi(z0); 'thermodynamic' returns
                    -Phi(z0)/beta, i.e. -(1/N beta) ln Z_D as N -> infinity

    Returns:
        float
    """
    value = phi(solve_order_parameter(p).z0, p)
    if convention == 'printed':
        return value
    if convention == 'thermodynamic':
        return -value / p.beta
    raise ValueError(f"unknown free-energy convention {convention!r}")


def order_parameter_jz(p: DickeParams) -> float:
    """<J_z>/N = -(eps / 2R) tanh(beta R / 2), R = sqrt(eps^2 + 16 g^2 z0^2)."""
    z0 = solve_order_parameter(p).z0
    root = math.sqrt(p.epsilon ** 2 + 16.0 * p.g ** 2 * z0 ** 2)
    return -(p.epsilon / (2.0 * root)) * math.tanh(0.5 * p.beta * root)


def log_partition_laplace(p: DickeParams) -> float:
    """
    ln Z_D from Laplace's method: 1/2 ln(2 / (beta omega |Phi''(z0)|)) + N Phi(z0).

    Raises:
        DegenerateCurvature: if |Phi''(z0)| < 1e-12 (flat maximum at beta = beta_c)
    """
    z0 = solve_order_parameter(p).z0
    curvature = abs(phi_second_derivative(z0, p))
    if curvature < CURVATURE_FLOOR:
        raise DegenerateCurvature(f"|Phi''(z0)| = {curvature:.3e}: Laplace approximation undefined")
    return 0.5 * math.log(2.0 / (p.beta * p.omega * curvature)) + p.n_atoms * phi(z0, p)


# ============================================================
# Closed-form photon moments (thermodynamic limit)
# ============================================================

def _moment_weights(gamma: int, beta_omega: float):
    """Coefficients C(gamma,k) Gamma(k+1/2) / sqrt(pi) (beta omega)^-k for k = 0..gamma."""
    return [
        special.comb(gamma, k, exact=True) * special.gamma(k + 0.5) / math.sqrt(math.pi) * beta_omega ** (-k)
        for k in range(gamma + 1)
    ]


def _check_gamma(gamma: int) -> None:
    if isinstance(gamma, bool) or int(gamma) != gamma or gamma < 1:
        raise InvalidParameters(f"moment order gamma must be an integer >= 1, got {gamma!r}")


def photon_moment_closed(p: DickeParams, gamma: int) -> float:
    """
    <n^gamma> in the thermodynamic limit.

    (1/sqrt(pi)) sum_k C(gamma,k) Gamma(k+1/2) (beta omega)^-k (N z0^2)^(gamma-k)

    gamma = 1 gives 1/(2 beta omega) + N z0^2;
    gamma = 2 gives 3/(4 beta^2 omega^2) + N z0^2/(beta omega) + N^2 z0^4.
    """
    _check_gamma(gamma)
    nz2 = p.n_atoms * solve_order_parameter(p).z0 ** 2
    weights = _moment_weights(int(gamma), p.beta * p.omega)
    return float(sum(w * nz2 ** (gamma - k) for k, w in enumerate(weights)))


def z0_squared_derivatives(p: DickeParams, solution: Optional[OrderParameterSolution] = None):
    """
    Partial derivatives of z0^2 with respect to g and omega.

    Implicit differentiation of the order-parameter equation gives, with
    s = sech^2(beta eta eps / 2):

        d(z0^2)/dg     = eps^2/(4 g^3) [omega eta^2/(omega - 2 beta g^2 s) - (eta^2 - 1)/2]
        d(z0^2)/domega = eps^2 eta^2 / (16 beta g^4 s - 8 g^2 omega)

    Both vanish identically in the Normal phase.

    Returns:
        tuple: (d_g, d_omega)
    """
    sol = solution or solve_order_parameter(p)
    if sol.phase == Phase.NORMAL:
        return 0.0, 0.0
    eta = sol.eta
    s = float(sech2(0.5 * p.beta * eta * p.epsilon))
    g = p.g
    denom = p.omega - 2.0 * p.beta * g ** 2 * s
    d_g = p.epsilon ** 2 / (4.0 * g ** 3) * (p.omega * eta ** 2 / denom - 0.5 * (eta ** 2 - 1.0))
    d_omega = p.epsilon ** 2 * eta ** 2 / (16.0 * p.beta * g ** 4 * s - 8.0 * g ** 2 * p.omega)
    return d_g, d_omega


def _closed_moments(p: DickeParams) -> PhotonMoments:
    sol = solve_order_parameter(p)
    n_atoms = p.n_atoms
    bw = p.beta * p.omega
    z2 = sol.z0 ** 2
    dgz2, domz2 = z0_squared_derivatives(p, sol)

    n_mean = 1.0 / (2.0 * bw) + n_atoms * z2
    n2_mean = 3.0 / (4.0 * bw ** 2) + n_atoms * z2 / bw + n_atoms ** 2 * z2 ** 2

    dg_n = n_atoms * dgz2
    dg_n2 = n_atoms / bw * dgz2 + 2.0 * n_atoms ** 2 * z2 * dgz2
    dom_n = -1.0 / (2.0 * p.beta * p.omega ** 2) + n_atoms * domz2
    dom_n2 = (-3.0 / (2.0 * p.beta ** 2 * p.omega ** 3)
              - n_atoms * z2 / (p.beta * p.omega ** 2)
              + n_atoms / bw * domz2
              + 2.0 * n_atoms ** 2 * z2 * domz2)
    return PhotonMoments(n_mean, n2_mean, dg_n, dg_n2, dom_n, dom_n2, MomentMethod.CLOSED_FORM)


# ============================================================
# Finite-N quadrature
# ============================================================

@dataclass(frozen=True)
class _Weight:
    """exp(N (Phi(z) - Phi_peak)) on [0, z_max]; the integrand is even so the half line suffices."""
    z_peak: float
    phi_peak: float
    z_max: float
    norm: float


def _phi_scalar(z: float, p: DickeParams) -> float:
    root = math.sqrt(p.epsilon ** 2 + 16.0 * p.g ** 2 * z * z)
    x = 0.5 * p.beta * root
    return -p.beta * p.omega * z * z + x + math.log1p(math.exp(-2.0 * x))


def _integrate(func: Callable[[float], float], weight: _Weight, p: DickeParams) -> float:
    n_atoms = p.n_atoms

    def integrand(z):
        return func(z) * math.exp(n_atoms * (_phi_scalar(z, p) - weight.phi_peak))

    points = [weight.z_peak] if 0.0 < weight.z_peak < weight.z_max else None
    result = integrate.quad(integrand, 0.0, weight.z_max, epsabs=0.0, epsrel=QUAD_REL_TOL,
                            limit=QUAD_SUBDIVISION_CAP, points=points, full_output=1)
    value, abserr, info = result[0], result[1], result[2]
    if len(result) > 3:
        if info.get('last', 0) >= QUAD_SUBDIVISION_CAP:
            raise QuadratureFailure(
                f"adaptive quadrature hit {QUAD_SUBDIVISION_CAP} subdivisions "
                f"(beta={p.beta:.6g}, N={n_atoms}): {result[3]}"
            )
        logger.debug(f"quadrature note (abserr={abserr:.2e}): {result[3]}")
    return value


def _weight(p: DickeParams) -> _Weight:
    z_peak = solve_order_parameter(p).z0
    phi_peak = _phi_scalar(z_peak, p)
    log_cut = math.log(PEAK_TRUNCATION)

    def drop(z):
        return p.n_atoms * (_phi_scalar(z, p) - phi_peak) - log_cut

    # Expand until the integrand has fallen below the truncation level
    hi = max(1.0, 2.0 * z_peak)
    for _ in range(200):
        if drop(hi) < 0.0:
            break
        hi *= 2.0
    else:
        raise QuadratureFailure(f"could not bracket the integrand tail (beta={p.beta:.6g})")
    z_max = optimize.brentq(drop, z_peak, hi, xtol=1e-12)

    partial = _Weight(z_peak, phi_peak, z_max, 1.0)
    norm = _integrate(lambda z: 1.0, partial, p)
    return _Weight(z_peak, phi_peak, z_max, norm)


def _average(func: Callable[[float], float], weight: _Weight, p: DickeParams) -> float:
    return _integrate(func, weight, p) / weight.norm


def _dphi_dg(z: float, p: DickeParams) -> float:
    root = math.sqrt(p.epsilon ** 2 + 16.0 * p.g ** 2 * z * z)
    return 8.0 * p.beta * p.g * z * z * math.tanh(0.5 * p.beta * root) / root


def photon_moment_quadrature(p: DickeParams, gamma: int) -> float:
    """
    <n^gamma> at finite N by adaptive quadrature against exp(N Phi(z)).

    sum_k C(gamma,k) Gamma(k+1/2)/sqrt(pi) (beta omega)^-k N^(gamma-k) <z^(2(gamma-k))>

    Raises:
        QuadratureFailure: if the adaptive rule exceeds its subdivision cap
    """
    _check_gamma(gamma)
    gamma = int(gamma)
    weight = _weight(p)
    weights = _moment_weights(gamma, p.beta * p.omega)
    total = 0.0
    for k, w in enumerate(weights):
        power = 2 * (gamma - k)
        avg = 1.0 if power == 0 else _average(lambda z, m=power: z ** m, weight, p)
        total += w * p.n_atoms ** (gamma - k) * avg
    return total


def log_partition_quadrature(p: DickeParams) -> float:
    """ln Z_D from the coherent-state integral sqrt(N/(pi beta omega)) int exp(N Phi) dz, no Laplace step."""
    weight = _weight(p)
    return (0.5 * math.log(p.n_atoms / (math.pi * p.beta * p.omega))
            + math.log(2.0 * weight.norm) + p.n_atoms * weight.phi_peak)


def _quadrature_moments(p: DickeParams) -> PhotonMoments:
    """
    Moments and derivatives at finite N.

    d<h>/dg     = N (<h dPhi/dg> - <h><dPhi/dg>)
    d<h>/domega = N (<h dPhi/domega> - <h><dPhi/domega>),  dPhi/domega = -beta z^2
    plus the explicit (beta omega)^-k terms for the omega derivatives.
    """
    n_atoms = p.n_atoms
    bw = p.beta * p.omega
    weight = _weight(p)

    z2 = _average(lambda z: z ** 2, weight, p)
    z4 = _average(lambda z: z ** 4, weight, p)
    z6 = _average(lambda z: z ** 6, weight, p)
    pg = _average(lambda z: _dphi_dg(z, p), weight, p)
    z2pg = _average(lambda z: z ** 2 * _dphi_dg(z, p), weight, p)
    z4pg = _average(lambda z: z ** 4 * _dphi_dg(z, p), weight, p)

    dg_z2 = n_atoms * (z2pg - z2 * pg)
    dg_z4 = n_atoms * (z4pg - z4 * pg)
    dom_z2 = -n_atoms * p.beta * (z4 - z2 * z2)
    dom_z4 = -n_atoms * p.beta * (z6 - z4 * z2)

    n_mean = n_atoms * z2 + 1.0 / (2.0 * bw)
    n2_mean = n_atoms ** 2 * z4 + n_atoms * z2 / bw + 3.0 / (4.0 * bw ** 2)

    dg_n = n_atoms * dg_z2
    dg_n2 = n_atoms ** 2 * dg_z4 + n_atoms * dg_z2 / bw
    dom_n = n_atoms * dom_z2 - 1.0 / (2.0 * p.beta * p.omega ** 2)
    dom_n2 = (n_atoms ** 2 * dom_z4 + n_atoms * dom_z2 / bw
              - n_atoms * z2 / (p.beta * p.omega ** 2)
              - 3.0 / (2.0 * p.beta ** 2 * p.omega ** 3))
    return PhotonMoments(n_mean, n2_mean, dg_n, dg_n2, dom_n, dom_n2, MomentMethod.QUADRATURE)


def _finite_difference_moments(p: DickeParams) -> PhotonMoments:
    """Closed-form moments with central-difference derivatives (independent oracle)."""
    def along(field, gamma):
        return lambda x: photon_moment_closed(replace(p, **{field: x}), gamma)

    return PhotonMoments(
        n_mean=photon_moment_closed(p, 1),
        n2_mean=photon_moment_closed(p, 2),
        dg_n=central_difference(along('g', 1), p.g),
        dg_n2=central_difference(along('g', 2), p.g),
        dom_n=central_difference(along('omega', 1), p.omega),
        dom_n2=central_difference(along('omega', 2), p.omega),
        method=MomentMethod.FINITE_DIFFERENCE,
    )


def moment_derivatives(p: DickeParams, method=MomentMethod.CLOSED_FORM) -> PhotonMoments:
    """
    Photon moments with their g- and omega-derivatives.

    Args:
        p: model parameters
        method: MomentMethod (or its string value)
            - CLOSED_FORM: analytic thermodynamic-limit formulas
            - QUADRATURE: finite-N averages, derivatives taken inside the integral
            - FINITE_DIFFERENCE: central differences of the closed form, h = 1e-5 * parameter

    Returns:
        PhotonMoments
    """
    method = MomentMethod(method)
    if method == MomentMethod.CLOSED_FORM:
        moments = _closed_moments(p)
    elif method == MomentMethod.QUADRATURE:
        moments = _quadrature_moments(p)
    elif method == MomentMethod.FINITE_DIFFERENCE:
        moments = _finite_difference_moments(p)
    else:
        raise ValueError(f"moment_derivatives does not support {method.value!r}; use probe.exact_photon_moments")

    if not moments.variance_ok:
        logger.warning(f"negative photon-number variance {moments.variance:.3e} "
                       f"({method.value}, beta={p.beta:.6g}): Laplace approximation not self-consistent")
    return moments
