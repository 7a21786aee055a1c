import math
from dataclasses import replace

import numpy as np
import pytest

from sensing.dicke_thermo import MomentMethod, moment_derivatives
from sensing.errors import FlatFunction, InsufficientPoints, InvalidParameters
from sensing.fisher import quantum_fi_g
from sensing.optimize import (
    Branch,
    ScanTarget,
    beta_scan,
    default_t_max,
    fit_power_law,
    fit_power_law_arrays,
    maximize_over_time,
    resolve_grid_method,
    resolve_method,
    scaling_fit,
    ultimate_precision,
)
from sensing.probe import EnsembleKind, EnsembleSpec

COARSE_GRID = np.linspace(0.5, 1.5, 21)


# ============================================================
# Time maximization
# ============================================================

def test_single_term_optimum_recovered():
    a, c = 3.0, 0.7
    t_opt, f_max = maximize_over_time(lambda t: a * t * t * math.exp(-2 * c * t * t), 5 / math.sqrt(c))
    assert t_opt == pytest.approx(1 / math.sqrt(2 * c), rel=1e-6)
    assert f_max == pytest.approx(a / (2 * c * math.e), rel=1e-6)


def test_refined_maximum_matches_dense_grid(dicke, probe):
    m = moment_derivatives(dicke.with_beta_ratio(1.05))
    t_max = default_t_max(probe, m)
    _, f_max = maximize_over_time(lambda t: quantum_fi_g(m, probe, t), t_max)
    dense = np.max(quantum_fi_g(m, probe, np.linspace(0.0, t_max, 100001)))
    assert f_max >= dense * (1 - 1e-9)
    assert f_max == pytest.approx(dense, rel=1e-6)


def test_maximum_stable_under_grid_doubling(dicke, probe):
    m = moment_derivatives(dicke.with_beta_ratio(1.2))
    t_max = default_t_max(probe, m)
    _, coarse = maximize_over_time(lambda t: quantum_fi_g(m, probe, t), t_max, 400)
    _, fine = maximize_over_time(lambda t: quantum_fi_g(m, probe, t), t_max, 800)
    assert coarse == pytest.approx(fine, rel=1e-6)


def test_flat_function_is_flagged():
    with pytest.raises(FlatFunction):
        maximize_over_time(lambda t: 0.0, 10.0)


def test_closed_form_normal_phase_has_no_sensitivity(dicke, probe):
    m = moment_derivatives(dicke.with_beta_ratio(0.8), MomentMethod.CLOSED_FORM)
    with pytest.raises(FlatFunction):
        maximize_over_time(lambda t: quantum_fi_g(m, probe, t), default_t_max(probe, m))


def test_invalid_time_interval():
    with pytest.raises(InvalidParameters):
        maximize_over_time(lambda t: t, 0.0)


def test_default_t_max_reaches_decay_scale(dicke, probe):
    m = moment_derivatives(dicke.with_beta_ratio(1.3))
    t_max = default_t_max(probe, m, n_probes=4)
    assert 4 * (probe.lam * t_max) ** 2 * m.n2_mean == pytest.approx(25.0)


@pytest.mark.parametrize("method, ratio, need_g, expected", [
    ('auto', 1.1, True, MomentMethod.QUADRATURE),
    ('auto', 0.5, True, MomentMethod.QUADRATURE),
    ('auto', 0.5, False, MomentMethod.CLOSED_FORM),
    ('auto', 1.5, True, MomentMethod.CLOSED_FORM),
    ('closed', 1.0, True, MomentMethod.CLOSED_FORM),
    ('quadrature', 1.5, True, MomentMethod.QUADRATURE),
])
def test_resolve_method(method, ratio, need_g, expected):
    assert resolve_method(method, ratio, need_g) == expected


@pytest.mark.parametrize("method, ratios, need_g, expected", [
    ('auto', np.linspace(0.5, 1.5, 101), True, MomentMethod.QUADRATURE),
    ('auto', np.linspace(0.5, 1.5, 101), False, MomentMethod.QUADRATURE),
    ('auto', [1.3, 1.4, 1.5], True, MomentMethod.CLOSED_FORM),
    ('auto', [1.1, 1.3, 1.5], True, MomentMethod.QUADRATURE),
    ('closed', np.linspace(0.5, 1.5, 11), True, MomentMethod.CLOSED_FORM),
])
def test_resolve_grid_method(method, ratios, need_g, expected):
    assert resolve_grid_method(method, ratios, need_g) == expected


# ============================================================
# Temperature scans
# ============================================================

def test_closed_form_scan_peaks_at_criticality(dicke, probe):
    scan = beta_scan(dicke, probe, COARSE_GRID, method='closed')
    assert abs(scan.peak_offset(ScanTarget.QUANTUM_G)) <= 1
    quantum = scan.curves[ScanTarget.QUANTUM_G]
    normal = scan.beta_ratios < 1.0
    assert np.all(quantum.f_max[normal] == 0.0)
    assert np.all(np.isnan(quantum.t_opt[normal]))
    assert np.all(quantum.t_opt[~normal] > 0)
    ratio = scan.fi_ratio()
    assert np.all(ratio[~normal] <= 1.0 + 1e-9)
    assert scan.methods == ('closed',) * COARSE_GRID.size


def test_scan_is_independent_of_thread_count(dicke, probe):
    grid = np.linspace(1.0, 1.5, 6)
    serial = beta_scan(dicke, probe, grid, method='closed', threads=1)
    parallel = beta_scan(dicke, probe, grid, method='closed', threads=3)
    for target in (ScanTarget.CLASSICAL_G, ScanTarget.QUANTUM_G):
        assert np.array_equal(serial.curves[target].f_max, parallel.curves[target].f_max)
        assert np.array_equal(serial.curves[target].t_opt, parallel.curves[target].t_opt)


def test_auto_scan_uses_one_method_across_the_grid(dicke, probe):
    grid = np.linspace(1.15, 1.25, 11)
    auto = beta_scan(dicke, probe, grid, targets=(ScanTarget.QUANTUM_G,), method='auto')
    quadrature = beta_scan(dicke, probe, grid, targets=(ScanTarget.QUANTUM_G,), method='quadrature')
    assert auto.methods == ('quadrature',) * grid.size
    f_auto = auto.curves[ScanTarget.QUANTUM_G].f_max
    assert np.array_equal(f_auto, quadrature.curves[ScanTarget.QUANTUM_G].f_max)
    # the per-point rule would switch to the closed form at 1.2; the curve stays smooth there
    steps = f_auto[1:] / f_auto[:-1]
    assert np.all((steps > 1 / 1.5) & (steps < 1.5))


def test_scan_rejects_unordered_grid(dicke, probe):
    with pytest.raises(InvalidParameters):
        beta_scan(dicke, probe, [1.2, 1.1, 1.3], method='closed')


@pytest.mark.slow
def test_quadrature_peak_shifts_toward_criticality_with_system_size(dicke, probe):
    grid = np.linspace(0.9, 1.3, 41)
    peaks = {}
    for n_atoms in (50, 500, 5000):
        scan = beta_scan(replace(dicke, n_atoms=n_atoms), probe, grid, targets=(ScanTarget.QUANTUM_G,),
                         method='quadrature')
        peaks[n_atoms] = scan.peak_ratio(ScanTarget.QUANTUM_G)
    # finite-size peaks sit on the superradiant side and close in on beta_c
    assert all(peak >= 1.0 for peak in peaks.values())
    assert peaks[50] - 1.0 > peaks[500] - 1.0 > peaks[5000] - 1.0
    assert peaks[50] == pytest.approx(1.20, abs=0.015)
    assert peaks[5000] - 1.0 <= 0.03


@pytest.mark.slow
def test_quadrature_scan_fits_at_fifty_atoms(dicke, probe):
    targets = (ScanTarget.QUANTUM_G, ScanTarget.EFFECTIVE_MULTIPARAM)
    scan = beta_scan(dicke, probe, method='quadrature', targets=targets)
    assert 1.15 <= scan.peak_ratio(ScanTarget.QUANTUM_G) <= 1.25
    assert 1.2 <= scan.peak_ratio(ScanTarget.EFFECTIVE_MULTIPARAM) <= 1.3
    quantum = scan.curves[ScanTarget.QUANTUM_G].f_max
    normal = scan.beta_ratios <= 0.85
    assert np.all(np.diff(quantum[normal]) > 0)
    mu = fit_power_law(scan, Branch.NORMAL)
    nu = fit_power_law(scan, Branch.SUPERRADIANT)
    assert mu.exponent > 0
    # the default superradiant window lies below the shifted peak, so F still rises there
    assert nu.exponent < 0 and nu.rms_residual >= 0


# ============================================================
# Power-law fits
# ============================================================

def test_planted_normal_exponent_recovered():
    ratios = np.linspace(0.5, 1.5, 101)
    fit = fit_power_law_arrays(ratios, 3.0 * ratios ** 9.5, Branch.NORMAL)
    assert fit.exponent == pytest.approx(9.5, abs=1e-10)
    assert fit.log_prefactor == pytest.approx(math.log(3.0), abs=1e-10)
    assert fit.window == (0.85, 0.99)
    assert fit.n_points >= 5


def test_planted_superradiant_exponent_recovered():
    ratios = np.linspace(0.5, 1.5, 101)
    fit = fit_power_law_arrays(ratios, 2.0 * ratios ** -76.0, 'superradiant', (1.01, 1.15))
    assert fit.exponent == pytest.approx(76.0, abs=1e-8)
    assert fit.rms_residual < 1e-10


def test_residual_reported_for_curved_data():
    ratios = np.linspace(0.5, 1.5, 101)
    fit = fit_power_law_arrays(ratios, np.exp(10 * ratios ** 2), Branch.NORMAL)
    assert fit.rms_residual > 0


def test_fit_needs_five_points():
    ratios = np.linspace(0.5, 1.5, 11)
    with pytest.raises(InsufficientPoints):
        fit_power_law_arrays(ratios, ratios ** 2, Branch.NORMAL)


def test_fit_window_must_stay_on_branch():
    ratios = np.linspace(0.5, 1.5, 101)
    with pytest.raises(InvalidParameters):
        fit_power_law_arrays(ratios, ratios, Branch.NORMAL, (0.9, 1.1))


# ============================================================
# Ensembles and scaling
# ============================================================

def test_uncorrelated_ultimate_precision_is_additive(dicke, probe):
    grid = [0.95, 1.0, 1.05, 1.1]
    single = ultimate_precision(dicke, probe, EnsembleSpec(1, 'unc'), grid, 'closed', refine=False)
    triple = ultimate_precision(dicke, probe, EnsembleSpec(3, 'unc'), grid, 'closed', refine=False)
    assert triple.value == 3 * single.value
    assert triple.beta_ratio == single.beta_ratio


def test_single_probe_ghz_equals_single_probe(dicke, probe):
    grid = [0.95, 1.0, 1.05, 1.1]
    ghz = ultimate_precision(dicke, probe, EnsembleSpec(1, 'ghz'), grid, 'closed')
    unc = ultimate_precision(dicke, probe, EnsembleSpec(1, 'unc'), grid, 'closed')
    assert ghz.value == pytest.approx(unc.value, rel=1e-12)
    assert ghz.value > 0


def test_werner_ultimate_precision_below_ghz(dicke, probe):
    grid = [1.0, 1.05, 1.1]
    ghz = ultimate_precision(dicke, probe, EnsembleSpec(10, 'ghz'), grid, 'closed', refine=False)
    werner = ultimate_precision(dicke, probe, EnsembleSpec(10, 'werner', 0.5), grid, 'closed', refine=False)
    assert 0 < werner.value <= ghz.value


def test_scaling_fits_at_criticality(dicke, scaling_probe):
    probes = range(1, 11)
    fits = {kind: scaling_fit(dicke, scaling_probe, probes, kind, 0.5, 'closed')
            for kind in (EnsembleKind.UNCORRELATED, EnsembleKind.GHZ, EnsembleKind.WERNER)}
    unc, ghz, werner = fits[EnsembleKind.UNCORRELATED], fits[EnsembleKind.GHZ], fits[EnsembleKind.WERNER]

    assert unc.r_squared == pytest.approx(1.0, abs=1e-12)
    assert unc.slope == pytest.approx(unc.values[0], rel=1e-12)
    assert ghz.r_squared > 0.99
    assert werner.r_squared > 0.98
    assert unc.values[0] == pytest.approx(ghz.values[0], rel=1e-12)

    # max over t of the GHZ form never beats N independent probes; Werner is a noisy GHZ
    multi = unc.n_probes >= 2
    assert np.all(ghz.values[multi] <= unc.values[multi])
    assert np.all(werner.values <= ghz.values * (1 + 1e-12))
    assert unc.slope > ghz.slope > werner.slope


def test_scaling_needs_four_probe_numbers(dicke, scaling_probe):
    with pytest.raises(InsufficientPoints):
        scaling_fit(dicke, scaling_probe, [1, 2, 3], 'ghz', method='closed')
