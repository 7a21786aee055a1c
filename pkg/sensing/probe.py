"""
Qubit Probe - dephasing of a qubit sensor coupled to the thermal Dicke cavity.

The probe couples dispersively to the cavity photon number:

    H_eff = omega_s sigma_+ sigma_- + H_D + lambda sigma_z n

Starting from (|e> + |g>)/sqrt(2) the populations never change; only the
coherence is multiplied by the decoherence factor

    L(t) = exp(-i omega_s t) exp(-2 i lambda t <n>) exp(-lambda^2 t^2 <n^2>)

valid for lambda/omega_s << 1. Multi-probe GHZ and Werner inputs reuse the
same factor raised to the number of probes.

A dense exact evaluation of L(t) for a few atoms is included as an oracle
for the closed form.
"""

import itertools
import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np
from scipy import linalg, special

from sensing.dicke_thermo import DickeParams, MomentMethod, PhotonMoments
from sensing.errors import (
    CutoffTooSmall,
    DimensionTooLarge,
    InvalidParameters,
    InvalidRegime,
)

logger = logging.getLogger(__name__)

VALIDITY_RATIO = 0.2          # lambda/omega_s and chi above this trigger a warning
DISPERSIVE_RATIO = 5.0        # delta_q/g_qc below this triggers a warning
TAIL_WEIGHT = 1e-10           # allowed thermal photon weight above the Fock cutoff
TRUNCATION_WARNING = 1e-6     # Gibbs population of the top Fock level that triggers a warning
MIN_FOCK_CUTOFF = 64
DEFAULT_DIMENSION_CAP = 4096
MAX_EXACT_ATOMS = 4


class EnsembleKind(str, Enum):
    UNCORRELATED = 'unc'
    GHZ = 'ghz'
    WERNER = 'werner'


@dataclass(frozen=True)
class ProbeParams:
    """
    Effective probe parameters.

    Attributes:
        omega_s: renormalized probe frequency
        lam: effective probe-cavity coupling (lambda)
        omega_q, g_qc, delta_q: raw precursors, present when built by effective_probe_params
    """
    omega_s: float
    lam: float
    omega_q: Optional[float] = None
    g_qc: Optional[float] = None
    delta_q: Optional[float] = None

    def __post_init__(self):
        if not (math.isfinite(self.omega_s) and self.omega_s > 0):
            raise InvalidParameters(f"omega_s must be positive, got {self.omega_s!r}")
        if not (math.isfinite(self.lam) and self.lam >= 0):
            raise InvalidParameters(f"lambda must be non-negative, got {self.lam!r}")
        if self.validity_warning:
            logger.warning(f"probe outside the weak-coupling regime: lambda/omega_s={self.lam / self.omega_s:.3g}, "
                           f"chi={self.chi}")

    @property
    def chi(self) -> Optional[float]:
        if self.g_qc is None or self.delta_q is None:
            return None
        return self.g_qc / self.delta_q

    @property
    def validity_warning(self) -> bool:
        """True when lambda/omega_s > 0.2 or chi > 0.2."""
        chi = self.chi
        return self.lam / self.omega_s > VALIDITY_RATIO or (chi is not None and chi > VALIDITY_RATIO)


@dataclass(frozen=True)
class QubitState:
    """Single-qubit state in Bloch form, rho = (1 + r.sigma)/2, basis {|e>, |g>}."""
    r: tuple

    @property
    def populations(self) -> tuple:
        return 0.5 * (1.0 + self.r[2]), 0.5 * (1.0 - self.r[2])

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.r))

    def density_matrix(self) -> np.ndarray:
        rx, ry, rz = self.r
        return 0.5 * np.array([[1.0 + rz, rx - 1j * ry],
                               [rx + 1j * ry, 1.0 - rz]])


@dataclass(frozen=True)
class EnsembleSpec:
    """n_probes qubits prepared uncorrelated, in a GHZ state, or in a Werner state with admixture w."""
    n_probes: int
    kind: EnsembleKind
    w: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, 'kind', EnsembleKind(self.kind))
        if isinstance(self.n_probes, bool) or int(self.n_probes) != self.n_probes or self.n_probes < 1:
            raise InvalidParameters(f"n_probes must be a positive integer, got {self.n_probes!r}")
        object.__setattr__(self, 'n_probes', int(self.n_probes))
        if self.kind == EnsembleKind.WERNER:
            if self.w is None:
                raise InvalidParameters("Werner ensemble needs an admixture w")
            if not 0.0 <= self.w <= 1.0:
                raise InvalidParameters(f"Werner admixture must lie in [0, 1], got {self.w!r}")


@dataclass(frozen=True)
class DecoherenceFactor:
    """L(t); value is a complex scalar or a complex array over a time grid."""
    value: complex

    @property
    def magnitude(self):
        return np.abs(self.value)

    @property
    def phase(self):
        return np.angle(self.value)


@dataclass(frozen=True)
class WernerBlock:
    """The g-dependent 2x2 block of the Werner output plus the weight of the permutation block."""
    block: np.ndarray
    residual_weight: float

    @property
    def diagonal(self) -> float:
        return float(self.block[0, 0].real)

    @property
    def coherence(self) -> complex:
        return complex(self.block[0, 1])


# ============================================================
# Effective parameters and closed-form dynamics
# ============================================================

def effective_probe_params(omega_q: float, g_qc: float, delta_q: float, omega: float) -> ProbeParams:
    """
    Renormalized probe frequency and coupling after eliminating the probe-cavity exchange.

        chi     = g_qc / delta_q
        omega_s = omega_q + 3 g_qc^2 / delta_q
        lambda  = omega chi^2 + 2 g_qc chi - omega_q chi^2

    Args:
        omega_q: bare probe frequency
        g_qc: probe-cavity exchange coupling (>= 0)
        delta_q: detuning, must be positive
        omega: cavity frequency

    Returns:
        ProbeParams with precursors attached

    Raises:
        InvalidRegime: if delta_q <= 0 or any input is negative
    """
    if delta_q <= 0:
        raise InvalidRegime(f"detuning delta_q must be positive, got {delta_q!r}")
    if omega_q <= 0 or omega <= 0 or g_qc < 0:
        raise InvalidRegime(f"omega_q, omega must be positive and g_qc non-negative "
                            f"(got omega_q={omega_q}, omega={omega}, g_qc={g_qc})")
    if g_qc > 0 and delta_q / g_qc < DISPERSIVE_RATIO:
        logger.warning(f"weakly dispersive probe: delta_q/g_qc = {delta_q / g_qc:.3g} < {DISPERSIVE_RATIO}")

    chi = g_qc / delta_q
    omega_s = omega_q + 3.0 * g_qc ** 2 / delta_q
    lam = omega * chi ** 2 + 2.0 * g_qc * chi - omega_q * chi ** 2
    return ProbeParams(omega_s=omega_s, lam=lam, omega_q=omega_q, g_qc=g_qc, delta_q=delta_q)


def _check_time(t):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or not np.all(np.isfinite(t)):
        raise InvalidParameters("encoding time must be finite and non-negative")
    return t


def decoherence_factor(pp: ProbeParams, m: PhotonMoments, t) -> DecoherenceFactor:
    """
    Weak-coupling decoherence factor.

    |L(t)| = exp(-lambda^2 t^2 <n^2>) and arg L(t) = -(omega_s + 2 lambda <n>) t.
    t may be a scalar or an array.
    """
    t = _check_time(t)
    value = np.exp(-1j * (pp.omega_s + 2.0 * pp.lam * m.n_mean) * t - (pp.lam * t) ** 2 * m.n2_mean)
    return DecoherenceFactor(value if value.ndim else complex(value))


def reduced_state(pp: ProbeParams, m: PhotonMoments, t: float) -> QubitState:
    """Probe Bloch vector (Re L, -Im L, 0) for the +x input state."""
    value = decoherence_factor(pp, m, t).value
    return QubitState((float(value.real), float(-value.imag), 0.0))


def ghz_coherence(pp: ProbeParams, m: PhotonMoments, t, n_probes: int):
    """Off-diagonal of the GHZ output in {|e...e>, |g...g>}: exp(N ln L(t)) = L(t)^N."""
    if n_probes < 1:
        raise InvalidParameters(f"n_probes must be >= 1, got {n_probes!r}")
    t = _check_time(t)
    log_value = -1j * (pp.omega_s + 2.0 * pp.lam * m.n_mean) * t - (pp.lam * t) ** 2 * m.n2_mean
    value = np.exp(n_probes * log_value)
    return value if value.ndim else complex(value)


# ============================================================
# Werner state decomposition
# ============================================================

def permutation_patterns(n_excited: int, n_ground: int) -> list:
    """
    All distinct orderings of n_excited 'e' and n_ground 'g' labels.

    Example:
        permutation_patterns(1, 2)  # ['egg', 'geg', 'gge']
    """
    n = n_excited + n_ground
    patterns = []
    for excited in itertools.combinations(range(n), n_excited):
        patterns.append(''.join('e' if i in excited else 'g' for i in range(n)))
    return patterns


def permutation_block_populations(n_probes: int) -> dict:
    """Number of product basis states with j excitations, j = 1..N-1 (the states outside the GHZ block)."""
    return {j: special.comb(n_probes, j, exact=True) for j in range(1, n_probes)}


def werner_block(pp: ProbeParams, m: PhotonMoments, t: float, n_probes: int, w: float) -> WernerBlock:
    """
    Split the Werner output into the g-dependent 2x2 block and the permutation block.

    Diagonal entries w/2^N + (1-w)/2, coherence (1-w)/2 L(t)^N; the rest of the
    white noise sits on the 2^N - 2 other product states and does not depend on g.
    """
    spec = EnsembleSpec(n_probes, EnsembleKind.WERNER, w)
    scale = 2.0 ** spec.n_probes
    diagonal = w / scale + 0.5 * (1.0 - w)
    coherence = 0.5 * (1.0 - w) * ghz_coherence(pp, m, t, spec.n_probes)
    block = np.array([[diagonal, coherence],
                      [np.conj(coherence), diagonal]], dtype=complex)
    residual = w * sum(permutation_block_populations(spec.n_probes).values()) / scale
    return WernerBlock(block, residual)


# ============================================================
# Exact small-N oracle
# ============================================================

def fock_cutoff(beta: float, omega: float, tail: float = TAIL_WEIGHT, minimum: int = MIN_FOCK_CUTOFF) -> int:
    """Smallest n_max with thermal weight sum_{k>n_max} e^(-beta omega k) / sum_k e^(-beta omega k) < tail."""
    levels = -math.log(tail) / (beta * omega)
    return max(minimum, int(math.floor(levels)))


def thermal_tail_weight(beta: float, omega: float, n_max: int) -> float:
    return math.exp(-beta * omega * (n_max + 1))


@dataclass(frozen=True)
class _ExactModel:
    hamiltonian: np.ndarray
    number: np.ndarray          # diagonal of the photon-number operator
    energies: np.ndarray
    vectors: np.ndarray
    gibbs_weights: np.ndarray   # normalized Boltzmann weights of the eigenstates


def _build_exact_model(p: DickeParams, n_max: Optional[int], dimension_cap: int) -> _ExactModel:
    if p.n_atoms > MAX_EXACT_ATOMS:
        raise InvalidParameters(f"exact oracle supports at most {MAX_EXACT_ATOMS} atoms, got {p.n_atoms}")
    if n_max is None:
        n_max = fock_cutoff(p.beta, p.omega)
    tail = thermal_tail_weight(p.beta, p.omega, n_max)
    if tail > TAIL_WEIGHT:
        raise CutoffTooSmall(f"Fock cutoff {n_max} leaves thermal tail weight {tail:.2e} > {TAIL_WEIGHT:.0e}")

    dim_atoms = 2 ** p.n_atoms
    dim_field = n_max + 1
    dimension = dim_atoms * dim_field
    if dimension > dimension_cap:
        raise DimensionTooLarge(f"Hilbert-space dimension {dimension} exceeds cap {dimension_cap}")

    # Single-atom operators in {|e>, |g>}
    sigma_z = np.diag([1.0, -1.0])
    sigma_plus = np.array([[0.0, 1.0], [0.0, 0.0]])
    eye2 = np.eye(2)

    def embed(op, site):
        out = np.ones((1, 1))
        for k in range(p.n_atoms):
            out = np.kron(out, op if k == site else eye2)
        return out

    j_z = 0.5 * sum(embed(sigma_z, k) for k in range(p.n_atoms))
    j_plus = sum(embed(sigma_plus, k) for k in range(p.n_atoms))
    j_x2 = j_plus + j_plus.T

    a = np.diag(np.sqrt(np.arange(1, dim_field, dtype=float)), 1)
    photons = np.arange(dim_field, dtype=float)

    hamiltonian = (p.epsilon * np.kron(j_z, np.eye(dim_field))
                   + p.omega * np.kron(np.eye(dim_atoms), np.diag(photons))
                   + p.g / math.sqrt(p.n_atoms) * np.kron(j_x2, a + a.T))
    number = np.tile(photons, dim_atoms)

    energies, vectors = linalg.eigh(hamiltonian)
    boltzmann = np.exp(-p.beta * (energies - energies[0]))
    gibbs_weights = boltzmann / boltzmann.sum()

    # Gibbs population of the highest Fock level in the truncated model
    top = np.sum(gibbs_weights * np.sum((vectors ** 2)[number == n_max], axis=0))
    logger.debug(f"Gibbs population {top:.2e} in Fock level {n_max}")
    if top > TRUNCATION_WARNING:
        logger.warning(f"Gibbs population {top:.2e} in Fock level {n_max}: truncation may bias the oracle")

    return _ExactModel(hamiltonian, number, energies, vectors, gibbs_weights)


def exact_photon_moments(p: DickeParams, n_max: Optional[int] = None,
                         dimension_cap: int = DEFAULT_DIMENSION_CAP) -> PhotonMoments:
    """<n>, <n^2> in the Gibbs state of the truncated Dicke Hamiltonian (derivatives are NaN)."""
    model = _build_exact_model(p, n_max, dimension_cap)
    amplitudes = model.vectors ** 2
    n_mean = float(model.gibbs_weights @ (model.number @ amplitudes))
    n2_mean = float(model.gibbs_weights @ ((model.number ** 2) @ amplitudes))
    nan = float('nan')
    return PhotonMoments(n_mean, n2_mean, nan, nan, nan, nan, MomentMethod.EXACT)


def decoherence_factor_exact(p: DickeParams, pp: ProbeParams, t, n_max: Optional[int] = None,
                             dimension_cap: int = DEFAULT_DIMENSION_CAP) -> DecoherenceFactor:
    """
    L(t) = Tr[exp(-i t H_e) rho_D exp(i t H_g)] by dense diagonalization.

    H_e = H_D + lambda n + omega_s, H_g = H_D - lambda n, rho_D the Gibbs state of
    H_D on the full atomic tensor-product space times a truncated Fock space.

    Args:
        p: Dicke parameters, n_atoms <= 4
        pp: probe parameters
        t: time or array of times (>= 0)
        n_max: photon cutoff (default: fock_cutoff rule)
        dimension_cap: largest allowed matrix dimension

    Returns:
        DecoherenceFactor

    Raises:
        CutoffTooSmall: if the thermal tail above n_max exceeds 1e-10
        DimensionTooLarge: if 2^N (n_max + 1) exceeds dimension_cap
    """
    t = _check_time(t)
    model = _build_exact_model(p, n_max, dimension_cap)
    logger.info(f"exact oracle: dimension {model.hamiltonian.shape[0]}, {t.size} time points")

    # ============================================================
    # Diagonalize the two conditional Hamiltonians
    # ============================================================
    shift = pp.lam * np.diag(model.number)
    energies_e, vectors_e = linalg.eigh(model.hamiltonian + shift)
    energies_g, vectors_g = linalg.eigh(model.hamiltonian - shift)

    # ============================================================
    # Tr[U_e rho U_g^dag] = sum_ij exp(-i t Ee_i) C_ij exp(i t Eg_j)
    # ============================================================
    rho = (model.vectors * model.gibbs_weights) @ model.vectors.T
    sandwich = vectors_e.T @ rho @ vectors_g
    overlap = vectors_g.T @ vectors_e
    kernel = sandwich * overlap.T

    times = np.atleast_1d(t)
    values = np.empty(times.shape, dtype=complex)
    for i, time in enumerate(times):
        left = np.exp(-1j * time * energies_e)
        right = np.exp(1j * time * energies_g)
        values[i] = np.exp(-1j * pp.omega_s * time) * (left @ kernel @ right)

    return DecoherenceFactor(values if t.ndim else complex(values[0]))
