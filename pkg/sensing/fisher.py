"""
Fisher Information - classical and quantum FI of the qubit probes.

Generic estimators:
- classical_fi_from_distribution: sum_u (d p_u)^2 / p_u
- bloch_qfi: single-qubit QFI from the Bloch vector and its derivative
- spectral_qfi: QFI of a (possibly sub-normalized) density matrix from its eigen-decomposition

Closed forms for the dephasing probe. With
    theta = (omega_s + 2 lambda <n>) t     x = lambda^2 t^2 <n^2>
the probe's Bloch vector is e^(-x) (cos theta, sin theta, 0) and

    F_g   = e^(-2x) (sin theta d theta + cos theta d x)^2 / (1 - cos^2 theta e^(-2x))
    QFI_g = e^(-2x) (d theta)^2 + (d x)^2 / (e^(2x) - 1)

GHZ probes replace theta, x by N theta, N x. All FIs are in units of 1/g^2.
Every closed form accepts either DickeParams (moments computed on the spot)
or precomputed PhotonMoments.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence, Union

import numpy as np

from sensing.dicke_thermo import DickeParams, MomentMethod, PhotonMoments, moment_derivatives
from sensing.errors import InvalidParameters, SingularBloch, SingularDistribution
from sensing.probe import EnsembleKind, EnsembleSpec, ProbeParams, werner_block
from utils.numerics import coth_minus_one

logger = logging.getLogger(__name__)

PROB_FLOOR = 1e-300
DPROB_FLOOR = 1e-150
NORMALIZATION_TOL = 1e-12
PURITY_TOL = 1e-12
RADIAL_TOL = 1e-8
NULL_SUBSPACE = 1e-14
DEGENERATE_TRACE = 1e-300

MomentSource = Union[DickeParams, PhotonMoments]


class WernerMode(str, Enum):
    EXACT = 'exact'
    ASYMPTOTIC = 'asymptotic'


@dataclass(frozen=True)
class FisherRecord:
    """FI at one encoding time, sigma_x measurement, one repetition."""
    t: float
    f_classical: float
    f_quantum: float

    @property
    def ratio(self) -> float:
        """F/QFI; NaN where both vanish."""
        return self.f_classical / self.f_quantum if self.f_quantum > 0 else float('nan')


@dataclass(frozen=True)
class FisherMatrix:
    """
    Two-parameter QFI matrix for zeta = (omega, g).

    f_eff = Det/Tr is the effective QFI (identity weighting); degenerate is
    set when Tr < 1e-300, in which case f_eff = 0.
    """
    matrix: np.ndarray
    f_eff: float
    degenerate: bool
    parameters: tuple = ('omega', 'g')

    def entry(self, m: str, n: str) -> float:
        return float(self.matrix[self.parameters.index(m), self.parameters.index(n)])


# ============================================================
# Generic estimators
# ============================================================

def classical_fi_from_distribution(probs: Sequence[float], dprobs: Sequence[float], strict: bool = False) -> float:
    """
    Classical FI sum_u (d_theta p_u)^2 / p_u.

    Outcomes with p < 1e-300 are skipped when their derivative is below 1e-150.
    A vanishing probability with a finite derivative makes the FI diverge:
    that returns math.inf (logged), or raises SingularDistribution when strict.

    Example:
        classical_fi_from_distribution([0.25, 0.75], [1.0, -1.0])  # 16/3
    """
    probs = np.asarray(probs, dtype=float)
    dprobs = np.asarray(dprobs, dtype=float)
    if probs.shape != dprobs.shape:
        raise InvalidParameters(f"probs and dprobs differ in length ({probs.size} vs {dprobs.size})")
    if np.any(probs < 0):
        raise InvalidParameters("probabilities must be non-negative")
    if abs(probs.sum() - 1.0) > NORMALIZATION_TOL:
        raise InvalidParameters(f"probabilities sum to {probs.sum():.15g}, not 1")

    total = 0.0
    for p, dp in zip(probs, dprobs):
        if p < PROB_FLOOR:
            if abs(dp) < DPROB_FLOOR:
                continue
            if strict:
                raise SingularDistribution(f"p = {p:.3e} with derivative {dp:.3e}: classical FI diverges")
            logger.warning(f"classical FI diverges (p = {p:.3e}, dp = {dp:.3e}); reporting inf")
            return math.inf
        total += dp * dp / p
    return float(total)


def bloch_qfi(r: Sequence[float], dr: Sequence[float]) -> float:
    """
    Single-qubit QFI |dr|^2 + (r.dr)^2 / (1 - |r|^2).

    Pure states (1 - |r|^2 < 1e-12) reduce to |dr|^2 provided the motion is
    tangential (|r.dr| < 1e-8).

    Raises:
        InvalidParameters: if |r| > 1
        SingularBloch: pure state with a radial derivative
    """
    r = np.asarray(r, dtype=float)
    dr = np.asarray(dr, dtype=float)
    norm2 = float(r @ r)
    if norm2 > 1.0 + PURITY_TOL:
        raise InvalidParameters(f"Bloch vector outside the ball: |r|^2 = {norm2:.15g}")
    radial = float(r @ dr)
    tangential = float(dr @ dr)
    mixedness = 1.0 - norm2
    if mixedness < PURITY_TOL:
        if abs(radial) < RADIAL_TOL:
            return tangential
        raise SingularBloch(f"pure Bloch vector with radial derivative r.dr = {radial:.3e}")
    return tangential + radial ** 2 / mixedness


def spectral_qfi(eigvals: Sequence[float], deig: Sequence[float], eigvecs, deigvecs) -> float:
    """
    QFI from the spectral decomposition rho = sum_l pi_l |psi_l><psi_l|.

        sum_l (d pi_l)^2 / pi_l
      + sum_{l != l'} 2 (pi_l - pi_l')^2 / (pi_l + pi_l') |<psi_l | d psi_l'>|^2

    Every term is non-negative. Classical terms with pi_l below 1e-14 and
    pairs with pi_l + pi_l' below 1e-14 are skipped. The eigenvectors must
    span the space the state moves in (kernel vectors included). Eigenvalues
    may sum to less than one, so a block of a direct sum can be passed on its own.

    Args:
        eigvals: pi_l
        deig: d pi_l / d theta
        eigvecs: matrix whose columns are |psi_l>
        deigvecs: matrix whose columns are |d psi_l>

    Returns:
        float
    """
    pis = np.asarray(eigvals, dtype=float)
    dpis = np.asarray(deig, dtype=float)
    vecs = np.asarray(eigvecs, dtype=complex)
    dvecs = np.asarray(deigvecs, dtype=complex)
    if np.any(pis < -NULL_SUBSPACE) or pis.sum() > 1.0 + NORMALIZATION_TOL:
        raise InvalidParameters("eigenvalues must be non-negative and sum to at most 1")

    support = pis >= NULL_SUBSPACE
    classical = float(np.sum(dpis[support] ** 2 / pis[support]))

    # overlaps[l, l'] = |<psi_l | d psi_l'>|^2
    overlaps = np.abs(vecs.conj().T @ dvecs) ** 2
    sums = pis[:, None] + pis[None, :]
    gaps = (pis[:, None] - pis[None, :]) ** 2
    weights = np.where(sums >= NULL_SUBSPACE, 2.0 * gaps / np.where(sums >= NULL_SUBSPACE, sums, 1.0), 0.0)
    return classical + float(np.sum(weights * overlaps))


# ============================================================
# Closed forms for the dephasing probe
# ============================================================

def _as_moments(source: MomentSource, method=MomentMethod.CLOSED_FORM) -> PhotonMoments:
    if isinstance(source, PhotonMoments):
        return source
    return moment_derivatives(source, method)


def _check_probes(n_probes: int) -> int:
    if isinstance(n_probes, bool) or int(n_probes) != n_probes or n_probes < 1:
        raise InvalidParameters(f"n_probes must be a positive integer, got {n_probes!r}")
    return int(n_probes)


@dataclass(frozen=True)
class _Encoding:
    """Phase theta, decay exponent x and their derivatives for one parameter, N probes."""
    theta: np.ndarray
    x: np.ndarray
    d_theta: np.ndarray
    d_x: np.ndarray


def _encoding(m: PhotonMoments, pp: ProbeParams, t, n_probes: int = 1, parameter: str = 'g') -> _Encoding:
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or not np.all(np.isfinite(t)):
        raise InvalidParameters("encoding time must be finite and non-negative")
    if parameter == 'g':
        dn, dn2 = m.dg_n, m.dg_n2
    elif parameter == 'omega':
        dn, dn2 = m.dom_n, m.dom_n2
    else:
        raise ValueError(f"unknown parameter {parameter!r}")
    lt2 = (pp.lam * t) ** 2
    return _Encoding(
        theta=n_probes * (pp.omega_s + 2.0 * pp.lam * m.n_mean) * t,
        x=n_probes * lt2 * m.n2_mean,
        d_theta=n_probes * 2.0 * pp.lam * t * dn,
        d_x=n_probes * lt2 * dn2,
    )


def _scalar(out: np.ndarray):
    return out if out.ndim else float(out)


def _dephasing_qfi(enc: _Encoding):
    # d_x^2 / (e^(2x) - 1) = d_x^2 (coth x - 1) / 2, zero where x = 0 (t = 0 or lambda = 0)
    x = enc.x
    positive = x > 0
    safe_x = np.where(positive, x, 1.0)
    decay = enc.d_x ** 2 * 0.5 * coth_minus_one(safe_x)
    out = np.exp(-2.0 * x) * enc.d_theta ** 2 + np.where(positive, decay, 0.0)
    return _scalar(np.asarray(out))


def sigma_x_distribution(source: MomentSource, pp: ProbeParams, t: float,
                         method=MomentMethod.CLOSED_FORM, parameter: str = 'g'):
    """
    Outcome probabilities of a sigma_x measurement and their parameter derivatives.

    p_+- = (1 +- cos(theta) e^(-x)) / 2

    Returns:
        tuple: (probs, dprobs), each a length-2 array ordered (+, -)
    """
    enc = _encoding(_as_moments(source, method), pp, float(t), parameter=parameter)
    theta, x = float(enc.theta), float(enc.x)
    signal = math.cos(theta) * math.exp(-x)
    d_signal = -math.exp(-x) * (math.sin(theta) * float(enc.d_theta) + math.cos(theta) * float(enc.d_x))
    probs = np.array([0.5 * (1.0 + signal), 0.5 * (1.0 - signal)])
    dprobs = np.array([0.5 * d_signal, -0.5 * d_signal])
    return probs, dprobs


def classical_fi_g(source: MomentSource, pp: ProbeParams, t, method=MomentMethod.CLOSED_FORM):
    """
    Classical FI of g for the sigma_x measurement.

    e^(-2x) (sin theta d_g theta + cos theta d_g x)^2 / (1 - cos^2 theta e^(-2x));
    zero at t = 0. Vectorized over t.
    """
    enc = _encoding(_as_moments(source, method), pp, t)
    decay2 = np.exp(-2.0 * enc.x)
    numerator = decay2 * (np.sin(enc.theta) * enc.d_theta + np.cos(enc.theta) * enc.d_x) ** 2
    denominator = 1.0 - np.cos(enc.theta) ** 2 * decay2
    with np.errstate(divide='ignore', invalid='ignore'):
        out = np.where(numerator == 0.0, 0.0,
                       np.where(denominator > 0.0, numerator / np.where(denominator > 0.0, denominator, 1.0), np.inf))
    if np.any(np.isinf(out)):
        logger.warning("classical FI diverges where cos^2(theta) e^(-2x) = 1")
    return _scalar(np.asarray(out))


def quantum_fi_g(source: MomentSource, pp: ProbeParams, t, method=MomentMethod.CLOSED_FORM):
    """
    Quantum FI of g for a single probe.

    QFI_g(t) = 1/2 lambda^2 t^2 {8 (d_g<n>)^2 e^(-2 lambda^2 t^2 <n^2>)
                                 + lambda^2 t^2 (d_g<n^2>)^2 [coth(lambda^2 t^2 <n^2>) - 1]}
    """
    return _dephasing_qfi(_encoding(_as_moments(source, method), pp, t))


def ghz_qfi(source: MomentSource, pp: ProbeParams, t, n_probes: int, method=MomentMethod.CLOSED_FORM):
    """QFI of g for N probes in a GHZ state; equals quantum_fi_g at N = 1."""
    n_probes = _check_probes(n_probes)
    return _dephasing_qfi(_encoding(_as_moments(source, method), pp, t, n_probes))


def uncorrelated_qfi(source: MomentSource, pp: ProbeParams, t, n_probes: int, method=MomentMethod.CLOSED_FORM):
    """N independent probes: N times the single-probe QFI."""
    n_probes = _check_probes(n_probes)
    return n_probes * quantum_fi_g(source, pp, t, method)


def werner_block_eigensystem(m: PhotonMoments, pp: ProbeParams, t: float, n_probes: int, w: float):
    """
    Analytic eigen-data of the Werner 2x2 block and its g-derivatives.

    Block [[d, c], [c*, d]] with c = |c| e^(i phi): eigenvalues d +- |c|,
    eigenvectors (1, +-e^(-i phi))/sqrt(2). d does not depend on g,
    d|c| = -N |c| d_g x and d phi = -N d_g theta.

    Returns:
        tuple: (eigvals, deig, eigvecs, deigvecs) in spectral_qfi's layout
    """
    block = werner_block(pp, m, t, n_probes, w)
    enc = _encoding(m, pp, t, n_probes)
    d = block.diagonal
    c = block.coherence
    mod_c = abs(c)
    phase = np.angle(c) if mod_c > 0 else -float(enc.theta)
    d_mod = -float(enc.d_x) * mod_c
    d_phase = -float(enc.d_theta)

    unit = np.exp(-1j * phase)
    eigvals = np.array([d + mod_c, d - mod_c])
    deig = np.array([d_mod, -d_mod])
    eigvecs = np.array([[1.0, 1.0], [unit, -unit]]) / math.sqrt(2.0)
    d_unit = -1j * d_phase * unit
    deigvecs = np.array([[0.0, 0.0], [d_unit, -d_unit]]) / math.sqrt(2.0)
    return eigvals, deig, eigvecs, deigvecs


def werner_qfi(source: MomentSource, pp: ProbeParams, t, n_probes: int, w: float,
               mode=WernerMode.EXACT, method=MomentMethod.CLOSED_FORM):
    """
    QFI of g for N probes in a Werner state (1-w) GHZ + w 1/2^N.

    The permutation block carries no g-dependence, so the QFI is that of the
    2x2 block alone. Vectorized over t like the other closed forms.

    Args:
        mode: EXACT applies spectral_qfi to the block's analytic eigen-data;
              ASYMPTOTIC returns (1 - w) * ghz_qfi, the large-N limit
    """
    mode = WernerMode(mode)
    n_probes = _check_probes(n_probes)
    EnsembleSpec(n_probes, EnsembleKind.WERNER, w)
    m = _as_moments(source, method)
    if mode == WernerMode.ASYMPTOTIC:
        return (1.0 - w) * ghz_qfi(m, pp, t, n_probes)
    if w == 0.0:
        return ghz_qfi(m, pp, t, n_probes)

    times = np.asarray(t, dtype=float)
    if np.any(times < 0) or not np.all(np.isfinite(times)):
        raise InvalidParameters("encoding time must be finite and non-negative")
    out = np.zeros(times.shape)
    if w < 1.0:
        for index, s in np.ndenumerate(times):
            if s > 0:
                out[index] = spectral_qfi(*werner_block_eigensystem(m, pp, float(s), n_probes, w))
    return _scalar(out)


def ensemble_qfi(source: MomentSource, pp: ProbeParams, t, ensemble: EnsembleSpec,
                 method=MomentMethod.CLOSED_FORM, mode=WernerMode.EXACT) -> float:
    """Dispatch over uncorrelated, GHZ and Werner probe ensembles."""
    m = _as_moments(source, method)
    if ensemble.kind == EnsembleKind.UNCORRELATED:
        return uncorrelated_qfi(m, pp, t, ensemble.n_probes)
    if ensemble.kind == EnsembleKind.GHZ:
        return ghz_qfi(m, pp, t, ensemble.n_probes)
    return werner_qfi(m, pp, t, ensemble.n_probes, ensemble.w, mode)


# ============================================================
# Two-parameter estimation
# ============================================================

def fisher_matrix(source: MomentSource, pp: ProbeParams, t: float, method=MomentMethod.CLOSED_FORM) -> FisherMatrix:
    """
    QFI matrix for (omega, g) with identity weighting.

    F_mn = e^(-2x) d_m theta d_n theta + d_m x d_n x / (e^(2x) - 1)

    The probe parameters are held fixed; only the photon moments carry the
    omega- and g-dependence.
    """
    m = _as_moments(source, method)
    encodings = [_encoding(m, pp, float(t), parameter=name) for name in ('omega', 'g')]
    x = float(encodings[0].x)
    if x > 0:
        decay_weight = 0.5 * float(coth_minus_one(x))
    else:
        decay_weight = 0.0

    # upper triangle only, mirrored so the matrix is exactly symmetric
    matrix = np.zeros((2, 2))
    for i, a in enumerate(encodings):
        for j in range(i, len(encodings)):
            b = encodings[j]
            matrix[i, j] = (math.exp(-2.0 * x) * float(a.d_theta) * float(b.d_theta)
                            + (float(a.d_x) * float(b.d_x) * decay_weight if x > 0 else 0.0))
            matrix[j, i] = matrix[i, j]

    trace = float(np.trace(matrix))
    if trace < DEGENERATE_TRACE:
        return FisherMatrix(matrix, 0.0, True)
    return FisherMatrix(matrix, float(np.linalg.det(matrix)) / trace, False)


def weighted_precision_bound(matrix, weights: Optional[Sequence[float]] = None) -> float:
    """
    Tr[W F^-1] for a diagonal weighting matrix W (identity by default).

    With identity weights this is Tr F / Det F = 1 / f_eff. Singular matrices give inf.
    """
    fim = matrix.matrix if isinstance(matrix, FisherMatrix) else np.asarray(matrix, dtype=float)
    w = np.diag(np.ones(fim.shape[0]) if weights is None else np.asarray(weights, dtype=float))
    try:
        inverse = np.linalg.inv(fim)
    except np.linalg.LinAlgError:
        return math.inf
    return float(np.trace(w @ inverse))


def cramer_rao_bound(fi: float, repetitions: int = 1) -> float:
    """Lower bound 1/sqrt(repetitions * FI) on the estimator's standard deviation."""
    if repetitions < 1:
        raise InvalidParameters(f"repetitions must be >= 1, got {repetitions!r}")
    if fi <= 0:
        return math.inf
    return 1.0 / math.sqrt(repetitions * fi)


def fisher_dynamics(source: MomentSource, pp: ProbeParams, times: Sequence[float],
                    method=MomentMethod.CLOSED_FORM) -> List[FisherRecord]:
    """Classical and quantum FI of g along a time grid (moments computed once)."""
    m = _as_moments(source, method)
    times = np.asarray(times, dtype=float)
    classical = np.atleast_1d(classical_fi_g(m, pp, times))
    quantum = np.atleast_1d(quantum_fi_g(m, pp, times))
    return [FisherRecord(float(t), float(fc), float(fq)) for t, fc, fq in zip(times, classical, quantum)]
