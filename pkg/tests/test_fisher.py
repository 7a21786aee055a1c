import math

import numpy as np
import pytest

from sensing.dicke_thermo import MomentMethod, moment_derivatives
from sensing.errors import InvalidParameters, SingularBloch, SingularDistribution
from sensing.fisher import (
    FisherRecord,
    WernerMode,
    bloch_qfi,
    classical_fi_from_distribution,
    classical_fi_g,
    cramer_rao_bound,
    ensemble_qfi,
    fisher_dynamics,
    fisher_matrix,
    ghz_qfi,
    quantum_fi_g,
    sigma_x_distribution,
    spectral_qfi,
    uncorrelated_qfi,
    weighted_precision_bound,
    werner_block_eigensystem,
    werner_qfi,
)
from sensing.optimize import default_t_max, maximize_over_time
from sensing.probe import EnsembleKind, EnsembleSpec, ProbeParams, werner_block

PAULI = (
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)


def _bloch_matrix(v, identity=1.0):
    return 0.5 * (identity * np.eye(2) + sum(c * s for c, s in zip(v, PAULI)))


def _eigen_data(rho, drho):
    """Eigen-data and first-order derivatives of a non-degenerate density matrix."""
    pis, vecs = np.linalg.eigh(rho)
    dpis = np.array([np.real(vecs[:, l].conj() @ drho @ vecs[:, l]) for l in range(len(pis))])
    dvecs = np.zeros_like(vecs)
    for l in range(len(pis)):
        for k in range(len(pis)):
            if k != l:
                dvecs[:, l] += (vecs[:, k].conj() @ drho @ vecs[:, l]) / (pis[l] - pis[k]) * vecs[:, k]
    return pis, dpis, vecs, dvecs


def _encoding(m, pp, t, n=1):
    theta = n * (pp.omega_s + 2 * pp.lam * m.n_mean) * t
    x = n * (pp.lam * t) ** 2 * m.n2_mean
    d_theta = n * 2 * pp.lam * t * m.dg_n
    d_x = n * (pp.lam * t) ** 2 * m.dg_n2
    return theta, x, d_theta, d_x


def _bloch_and_derivative(m, pp, t, n=1):
    theta, x, d_theta, d_x = _encoding(m, pp, t, n)
    decay = math.exp(-x)
    r = decay * np.array([math.cos(theta), math.sin(theta), 0.0])
    dr = decay * np.array([-math.sin(theta) * d_theta - math.cos(theta) * d_x,
                           math.cos(theta) * d_theta - math.sin(theta) * d_x, 0.0])
    return r, dr


@pytest.fixture
def samples(dicke, probe, rng):
    """200 seeded (moments, t) pairs on both sides of the transition."""
    points = []
    for ratio in (0.7, 0.9, 1.05, 1.2, 1.5):
        method = MomentMethod.QUADRATURE if ratio < 1 else MomentMethod.CLOSED_FORM
        m = moment_derivatives(dicke.with_beta_ratio(ratio), method)
        t_max = default_t_max(probe, m)
        for t in rng.uniform(0.02, 0.6, size=40) * t_max:
            points.append((m, float(t)))
    return points


# ============================================================
# Generic estimators
# ============================================================

def test_classical_fi_of_parameter_free_distribution():
    assert classical_fi_from_distribution([0.5, 0.5], [0.0, 0.0]) == 0.0


def test_classical_fi_bernoulli():
    theta = 0.25
    assert classical_fi_from_distribution([theta, 1 - theta], [1.0, -1.0]) == pytest.approx(16 / 3)


def test_classical_fi_divergence():
    assert classical_fi_from_distribution([0.0, 1.0], [1.0, -1.0]) == math.inf
    with pytest.raises(SingularDistribution):
        classical_fi_from_distribution([0.0, 1.0], [1.0, -1.0], strict=True)
    assert classical_fi_from_distribution([0.0, 1.0], [0.0, 0.0]) == 0.0


def test_classical_fi_input_validation():
    with pytest.raises(InvalidParameters):
        classical_fi_from_distribution([0.5, 0.6], [0.0, 0.0])
    with pytest.raises(InvalidParameters):
        classical_fi_from_distribution([0.5, 0.5], [0.0])


def test_bloch_qfi_pure_state():
    assert bloch_qfi([1, 0, 0], [0, 0.7, 0]) == pytest.approx(0.49)
    with pytest.raises(SingularBloch):
        bloch_qfi([1, 0, 0], [0.5, 0, 0])


def test_bloch_qfi_maximally_mixed():
    assert bloch_qfi([0, 0, 0], [0.3, -0.4, 1.2]) == pytest.approx(0.09 + 0.16 + 1.44)


def test_bloch_qfi_matches_spectral_route(rng):
    for _ in range(20):
        direction = rng.normal(size=3)
        r = rng.uniform(0.1, 0.95) * direction / np.linalg.norm(direction)
        dr = rng.normal(size=3)
        data = _eigen_data(_bloch_matrix(r), _bloch_matrix(dr, identity=0.0))
        assert bloch_qfi(r, dr) == pytest.approx(spectral_qfi(*data), rel=1e-10)


def test_spectral_qfi_pure_state_reduction():
    psi = np.array([1.0, 0.0], dtype=complex)
    dpsi = np.array([0.0, 0.35j])
    vecs = np.column_stack([psi, [0.0, 1.0]])
    dvecs = np.column_stack([dpsi, [0.35j, 0.0]])
    value = spectral_qfi([1.0, 0.0], [0.0, 0.0], vecs, dvecs)
    assert value == pytest.approx(4 * 0.35 ** 2)
    # same motion in Bloch form: r = (0, 0, 1), dr = (0, 0.7, 0)
    assert value == pytest.approx(bloch_qfi([0, 0, 1], [0, 0.7, 0]))


def test_spectral_qfi_of_static_state():
    vecs = np.eye(2, dtype=complex)
    assert spectral_qfi([0.7, 0.3], [0.0, 0.0], vecs, np.zeros((2, 2))) == 0.0


def test_spectral_qfi_direct_sum_additivity(rng):
    blocks = []
    for weight in (0.4, 0.6):
        direction = rng.normal(size=3)
        r = rng.uniform(0.2, 0.9) * direction / np.linalg.norm(direction)
        data = _eigen_data(_bloch_matrix(r), _bloch_matrix(rng.normal(size=3), identity=0.0))
        pis, dpis, vecs, dvecs = data
        blocks.append((weight * pis, weight * dpis, vecs, dvecs))

    pis = np.concatenate([b[0] for b in blocks])
    dpis = np.concatenate([b[1] for b in blocks])
    vecs = np.zeros((4, 4), dtype=complex)
    dvecs = np.zeros((4, 4), dtype=complex)
    for i, b in enumerate(blocks):
        vecs[2 * i:2 * i + 2, 2 * i:2 * i + 2] = b[2]
        dvecs[2 * i:2 * i + 2, 2 * i:2 * i + 2] = b[3]

    combined = spectral_qfi(pis, dpis, vecs, dvecs)
    separate = sum(spectral_qfi(*b) for b in blocks)
    assert combined == pytest.approx(separate, rel=1e-12)


# ============================================================
# Closed forms against the generic routes
# ============================================================

def test_fi_vanishes_at_zero_time(dicke, probe):
    p = dicke.with_beta_ratio(1.05)
    assert classical_fi_g(p, probe, 0.0) == 0.0
    assert quantum_fi_g(p, probe, 0.0) == 0.0
    assert ghz_qfi(p, probe, 0.0, 5) == 0.0


def test_classical_closed_form_matches_distribution_route(samples, probe):
    for m, t in samples:
        probs, dprobs = sigma_x_distribution(m, probe, t)
        assert classical_fi_g(m, probe, t) == pytest.approx(
            classical_fi_from_distribution(probs, dprobs), rel=1e-10)


def test_quantum_closed_form_matches_bloch_route(samples, probe):
    for m, t in samples:
        assert quantum_fi_g(m, probe, t) == pytest.approx(
            bloch_qfi(*_bloch_and_derivative(m, probe, t)), rel=1e-10)


def test_ghz_closed_form_matches_bloch_route(samples, probe):
    assert len(samples) >= 200
    for m, t in samples:
        for n in (2, 5):
            assert ghz_qfi(m, probe, t, n) == pytest.approx(
                bloch_qfi(*_bloch_and_derivative(m, probe, t, n)), rel=1e-10)


def test_fi_hierarchy(samples, probe):
    for m, t in samples:
        assert 0.0 <= classical_fi_g(m, probe, t) <= quantum_fi_g(m, probe, t) * (1 + 1e-12)


def test_quantum_fi_decays_at_long_times(dicke, probe):
    m = moment_derivatives(dicke.with_beta_ratio(1.2))
    t = 10.0 / (probe.lam * math.sqrt(m.n2_mean))
    assert quantum_fi_g(m, probe, t) < 1e-30


def test_quantum_fi_is_vectorized(dicke, probe):
    m = moment_derivatives(dicke.with_beta_ratio(1.2))
    times = np.linspace(0.0, 3.0, 7)
    values = quantum_fi_g(m, probe, times)
    assert values.shape == (7,)
    assert values[3] == pytest.approx(quantum_fi_g(m, probe, float(times[3])))


def test_ghz_reduces_to_single_probe(dicke, probe):
    m = moment_derivatives(dicke.with_beta_ratio(1.1))
    for t in (0.2, 1.0, 2.5):
        assert ghz_qfi(m, probe, t, 1) == pytest.approx(quantum_fi_g(m, probe, t), rel=1e-14)


def test_ghz_short_time_expansion(dicke, probe):
    m = moment_derivatives(dicke.with_beta_ratio(1.05))
    n = 4
    t = 1e-3 / (probe.lam * math.sqrt(m.n2_mean))
    lt2 = (probe.lam * t) ** 2
    # phase term grows as N^2, the decay term as N
    expected = n ** 2 * 4 * lt2 * m.dg_n ** 2 + n * lt2 * m.dg_n2 ** 2 / (2 * m.n2_mean)
    assert ghz_qfi(m, probe, t, n) == pytest.approx(expected, rel=1e-4)


def test_uncorrelated_is_additive(dicke, probe):
    m = moment_derivatives(dicke.with_beta_ratio(1.1))
    assert uncorrelated_qfi(m, probe, 1.3, 1) == quantum_fi_g(m, probe, 1.3)
    assert uncorrelated_qfi(m, probe, 1.3, 7) == pytest.approx(7 * quantum_fi_g(m, probe, 1.3), rel=1e-15)


def test_uncorrelated_pair_matches_spectral_product_state(dicke, probe):
    m = moment_derivatives(dicke.with_beta_ratio(1.1))
    t = 1.3
    pis, dpis, vecs, dvecs = werner_block_eigensystem(m, probe, t, 1, 0.0)
    prod_pis = np.kron(pis, pis)
    prod_dpis = np.kron(dpis, pis) + np.kron(pis, dpis)
    prod_vecs = np.kron(vecs, vecs)
    prod_dvecs = np.kron(dvecs, vecs) + np.kron(vecs, dvecs)
    assert uncorrelated_qfi(m, probe, t, 2) == pytest.approx(
        spectral_qfi(prod_pis, prod_dpis, prod_vecs, prod_dvecs), rel=1e-10)


# ============================================================
# Werner states
# ============================================================

@pytest.fixture
def werner_moments(dicke):
    return moment_derivatives(dicke.with_beta_ratio(1.05))


def test_werner_without_noise_equals_ghz(werner_moments, probe):
    assert werner_qfi(werner_moments, probe, 0.8, 5, 0.0) == ghz_qfi(werner_moments, probe, 0.8, 5)


def test_werner_full_noise_carries_no_information(werner_moments, probe):
    assert werner_qfi(werner_moments, probe, 0.8, 5, 1.0) == 0.0


def test_werner_spectral_route_matches_block_formula(werner_moments, probe):
    for n, w, t in ((1, 0.3, 0.5), (3, 0.5, 0.8), (6, 0.2, 0.4)):
        block = werner_block(probe, werner_moments, t, n, w)
        _, _, d_theta, d_x = _encoding(werner_moments, probe, t, n)
        d, c = block.diagonal, abs(block.coherence)
        expected = 2 * d * (d_x * c) ** 2 / (d ** 2 - c ** 2) + 2 * d_theta ** 2 * c ** 2 / d
        assert werner_qfi(werner_moments, probe, t, n, w) == pytest.approx(expected, rel=1e-10)


def test_werner_bounded_by_ghz(werner_moments, probe):
    for n in (2, 4, 8):
        for w in (0.1, 0.5, 0.9):
            for t in (0.3, 0.9, 2.0):
                ghz = ghz_qfi(werner_moments, probe, t, n)
                werner = werner_qfi(werner_moments, probe, t, n, w)
                assert 0.0 <= werner <= ghz * (1 + 1e-12)


def test_werner_decayed_states_stay_non_negative(werner_moments, probe):
    for n in (2, 8):
        t_max = default_t_max(probe, werner_moments, n)
        times = np.linspace(0.0, 3.0 * t_max, 61)
        values = werner_qfi(werner_moments, probe, times, n, 0.5)
        assert values.shape == (61,)
        assert values[0] == 0.0
        assert np.all(values >= 0.0)
        # block formula agreement while the coherence is still resolved next to the diagonal
        for t in times[1:13]:
            block = werner_block(probe, werner_moments, float(t), n, 0.5)
            _, _, d_theta, d_x = _encoding(werner_moments, probe, float(t), n)
            d, c = block.diagonal, abs(block.coherence)
            expected = 2 * d * (d_x * c) ** 2 / (d ** 2 - c ** 2) + 2 * d_theta ** 2 * c ** 2 / d
            assert werner_qfi(werner_moments, probe, float(t), n, 0.5) == pytest.approx(expected, rel=1e-10)


def test_werner_accepts_time_arrays(werner_moments, probe):
    times = np.array([[0.0, 0.4], [0.8, 1.6]])
    values = werner_qfi(werner_moments, probe, times, 3, 0.3)
    assert values.shape == (2, 2)
    assert values[0, 0] == 0.0
    assert values[1, 0] == werner_qfi(werner_moments, probe, 0.8, 3, 0.3)
    assert np.all(werner_qfi(werner_moments, probe, times, 3, 1.0) == 0.0)


def test_spectral_qfi_never_negative_near_pure_states(rng):
    for _ in range(50):
        direction = rng.normal(size=3)
        r = (1.0 - 10.0 ** rng.uniform(-12, -6)) * direction / np.linalg.norm(direction)
        tangent = np.cross(r, rng.normal(size=3))
        data = _eigen_data(_bloch_matrix(r), _bloch_matrix(tangent, identity=0.0))
        assert spectral_qfi(*data) >= 0.0


def test_werner_asymptotic_form_converges(werner_moments, probe):
    n, w = 12, 0.5
    t_max = default_t_max(probe, werner_moments, n)
    t_opt, _ = maximize_over_time(lambda t: werner_qfi(werner_moments, probe, t, n, w), t_max)
    exact = werner_qfi(werner_moments, probe, t_opt, n, w, WernerMode.EXACT)
    asymptotic = werner_qfi(werner_moments, probe, t_opt, n, w, 'asymptotic')
    assert abs(exact - asymptotic) / exact < 0.01


def test_ensemble_dispatch(werner_moments, probe):
    t = 0.7
    assert ensemble_qfi(werner_moments, probe, t, EnsembleSpec(3, EnsembleKind.UNCORRELATED)) == \
        uncorrelated_qfi(werner_moments, probe, t, 3)
    assert ensemble_qfi(werner_moments, probe, t, EnsembleSpec(3, EnsembleKind.GHZ)) == \
        ghz_qfi(werner_moments, probe, t, 3)
    assert ensemble_qfi(werner_moments, probe, t, EnsembleSpec(3, EnsembleKind.WERNER, 0.5)) == \
        werner_qfi(werner_moments, probe, t, 3, 0.5)


# ============================================================
# Two-parameter estimation and bounds
# ============================================================

def test_fisher_matrix_at_zero_time(dicke, probe):
    fm = fisher_matrix(dicke.with_beta_ratio(1.1), probe, 0.0)
    assert np.all(fm.matrix == 0.0)
    assert fm.f_eff == 0.0
    assert fm.degenerate


def test_fisher_matrix_properties(samples, probe):
    for m, t in samples[::2]:
        fm = fisher_matrix(m, probe, t)
        assert fm.matrix[0, 1] == fm.matrix[1, 0]
        assert fm.entry('g', 'g') == pytest.approx(quantum_fi_g(m, probe, t), rel=1e-10)
        gg, ww, gw = fm.entry('g', 'g'), fm.entry('omega', 'omega'), fm.entry('g', 'omega')
        assert gg * ww >= gw ** 2 * (1 - 1e-9)
        assert 0.0 <= fm.f_eff <= 0.5 * np.trace(fm.matrix) * (1 + 1e-12)
        assert fm.f_eff <= gg * (1 + 1e-9)


def test_effective_fi_of_isotropic_matrix():
    a = 3.0
    assert weighted_precision_bound(np.diag([a, a])) == pytest.approx(1 / (a / 2))
    assert weighted_precision_bound(np.zeros((2, 2))) == math.inf
    assert weighted_precision_bound(np.diag([2.0, 4.0]), weights=[1.0, 0.0]) == pytest.approx(0.5)


def test_cramer_rao_bound():
    assert cramer_rao_bound(4.0) == 0.5
    assert cramer_rao_bound(4.0, repetitions=4) == 0.25
    assert cramer_rao_bound(0.0) == math.inf


def test_fisher_dynamics(dicke, probe):
    records = fisher_dynamics(dicke.with_beta_ratio(1.05), probe, np.linspace(0.0, 3.0, 31))
    assert len(records) == 31
    assert isinstance(records[0], FisherRecord)
    assert records[0].f_classical == 0.0 and records[0].f_quantum == 0.0
    assert math.isnan(records[0].ratio)
    assert all(r.f_classical <= r.f_quantum * (1 + 1e-12) for r in records)


def test_classical_fi_has_interior_maximum(dicke, probe):
    p = dicke.with_beta_ratio(1.05)
    m = moment_derivatives(p)
    t_max = default_t_max(probe, m)
    t_opt, f_max = maximize_over_time(lambda t: classical_fi_g(m, probe, t), t_max)
    assert 0.0 < t_opt < t_max
    assert f_max > 0
    assert classical_fi_g(m, probe, t_max) < f_max * 1e-6


def test_probe_parameters_validated(dicke):
    with pytest.raises(InvalidParameters):
        ghz_qfi(dicke, ProbeParams(1.0, 0.1), 1.0, 0)
