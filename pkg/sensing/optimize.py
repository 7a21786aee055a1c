"""
Optimization - maximize FI over encoding time and temperature, fit the results.

- maximize_over_time: coarse grid + golden-section refinement
- beta_scan: per-temperature maxima over a beta/beta_c grid (thread pool, ordered by index)
- fit_power_law: log-log least squares on one side of the transition
- ultimate_precision / scaling_fit: maximal QFI per probe ensemble and its growth with probe number
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize

from sensing.dicke_thermo import DickeParams, MomentMethod, PhotonMoments, moment_derivatives
from sensing.errors import FlatFunction, InsufficientPoints, InvalidParameters
from sensing.fisher import classical_fi_g, ensemble_qfi, fisher_matrix, quantum_fi_g
from sensing.probe import EnsembleKind, EnsembleSpec, ProbeParams

logger = logging.getLogger(__name__)

# Time maximization
DEFAULT_GRID_POINTS = 400
DEFAULT_RTOL = 1e-8
DECAY_EXPONENT = 25.0       # t_max solves lambda^2 t^2 N <n^2> = 25

# Temperature grid
DEFAULT_BETA_RATIOS = np.linspace(0.5, 1.5, 101)
AUTO_QUADRATURE_WINDOW = 0.2

# Fits
MIN_FIT_POINTS = 5
MIN_SCALING_POINTS = 4
DEFAULT_NORMAL_WINDOW = (0.85, 0.99)
DEFAULT_SUPERRADIANT_WINDOW = (1.01, 1.15)


class ScanTarget(str, Enum):
    CLASSICAL_G = 'classical'
    QUANTUM_G = 'quantum'
    EFFECTIVE_MULTIPARAM = 'effective'


class Branch(str, Enum):
    NORMAL = 'normal'
    SUPERRADIANT = 'superradiant'


@dataclass(frozen=True)
class ScanCurve:
    t_opt: np.ndarray
    f_max: np.ndarray


@dataclass
class ScanResult:
    """
    Maxima over time at each beta/beta_c.

    Points where the FI vanishes identically (closed-form Normal phase) hold
    f_max = 0 and t_opt = NaN.
    """
    beta_ratios: np.ndarray
    curves: Dict[ScanTarget, ScanCurve]
    methods: Tuple[str, ...] = field(default_factory=tuple)

    def peak_index(self, target: ScanTarget) -> int:
        return int(np.argmax(self.curves[ScanTarget(target)].f_max))

    def peak_ratio(self, target: ScanTarget) -> float:
        return float(self.beta_ratios[self.peak_index(target)])

    def peak_offset(self, target: ScanTarget) -> int:
        """Grid steps between the peak and the point nearest beta/beta_c = 1."""
        critical = int(np.argmin(np.abs(self.beta_ratios - 1.0)))
        return self.peak_index(target) - critical

    def fi_ratio(self) -> np.ndarray:
        """Classical over quantum maximum per point (NaN where the quantum maximum is 0)."""
        classical = self.curves[ScanTarget.CLASSICAL_G].f_max
        quantum = self.curves[ScanTarget.QUANTUM_G].f_max
        with np.errstate(divide='ignore', invalid='ignore'):
            return np.where(quantum > 0, classical / np.where(quantum > 0, quantum, 1.0), np.nan)


@dataclass(frozen=True)
class PowerLawFit:
    """
    F ~ (beta/beta_c)^mu on the Normal branch, (beta/beta_c)^-nu on the Superradiant branch.

    exponent is mu or nu, both positive for an FI peaked at criticality.
    """
    branch: Branch
    exponent: float
    log_prefactor: float
    window: Tuple[float, float]
    rms_residual: float
    n_points: int
    target: Optional[ScanTarget] = None


@dataclass(frozen=True)
class UltimatePrecision:
    """Maximal QFI over (t, beta) for one ensemble."""
    value: float
    beta_ratio: float
    t_opt: float
    ensemble: EnsembleSpec


@dataclass(frozen=True)
class ScalingFit:
    """F = slope * N (+ intercept) over the listed probe numbers."""
    kind: EnsembleKind
    n_probes: np.ndarray
    values: np.ndarray
    t_opt: np.ndarray
    slope: float
    intercept: float
    intercept_forced: bool
    r_squared: float


# ============================================================
# Time maximization
# ============================================================

def default_t_max(pp: ProbeParams, moments: PhotonMoments, n_probes: int = 1) -> float:
    """Time at which lambda^2 t^2 N <n^2> = 25; every FI term is negligible beyond it."""
    if pp.lam <= 0:
        raise InvalidParameters("lambda = 0: the probe carries no information")
    return math.sqrt(DECAY_EXPONENT / (n_probes * moments.n2_mean)) / pp.lam


def maximize_over_time(fi_function: Callable[[float], float], t_max: float,
                       grid_points: int = DEFAULT_GRID_POINTS, rtol: float = DEFAULT_RTOL):
    """
    Maximize an FI curve on [0, t_max].

    Scans a uniform grid, then refines around the best grid point by golden
    section (bounded Brent when the grid triple is not a strict bracket).
    Ties go to the smaller time.

    Args:
        fi_function: scalar FI as a function of t
        t_max: end of the search interval
        grid_points: coarse grid size (default 400)
        rtol: relative tolerance of the refinement

    Returns:
        tuple: (t_opt, f_max)

    Raises:
        FlatFunction: if the maximum over the grid is 0
    """
    if not (t_max > 0 and math.isfinite(t_max)):
        raise InvalidParameters(f"t_max must be positive and finite, got {t_max!r}")
    if grid_points < 3:
        raise InvalidParameters(f"need at least 3 grid points, got {grid_points}")

    grid = np.linspace(0.0, t_max, grid_points)
    values = np.array([fi_function(t) for t in grid], dtype=float)
    best = int(np.argmax(values))
    f_best = float(values[best])
    if not f_best > 0.0:
        raise FlatFunction(f"FI vanishes on the whole grid [0, {t_max:.6g}]")
    if not math.isfinite(f_best):
        return float(grid[best]), f_best
    if best == grid_points - 1:
        logger.warning(f"FI maximum sits on t_max = {t_max:.6g}; the interval may be too short")

    lo = grid[max(best - 1, 0)]
    hi = grid[min(best + 1, grid_points - 1)]

    def negative(t):
        return -fi_function(min(max(t, lo), hi))

    try:
        if best in (0, grid_points - 1):
            raise ValueError("maximum on the grid boundary")
        result = optimize.minimize_scalar(negative, bracket=(lo, grid[best], hi), method='golden',
                                          options={'xtol': rtol})
    except ValueError:
        result = optimize.minimize_scalar(negative, bounds=(lo, hi), method='bounded',
                                          options={'xatol': rtol * max(hi, 1e-300)})

    t_refined = float(min(max(result.x, lo), hi))
    f_refined = float(fi_function(t_refined))
    if f_refined > f_best:
        return t_refined, f_refined
    return float(grid[best]), f_best


# ============================================================
# Temperature scans
# ============================================================

def resolve_method(method, beta_ratio: float, need_g: bool = True) -> MomentMethod:
    """
    Map 'auto' to a concrete moment method at one beta/beta_c.

    Quadrature within |beta/beta_c - 1| < 0.2, or in the Normal phase when
    g-derivatives are needed (the closed form has none there); closed form
    elsewhere.
    """
    if method != 'auto':
        return MomentMethod(method)
    if abs(beta_ratio - 1.0) < AUTO_QUADRATURE_WINDOW or (need_g and beta_ratio < 1.0):
        return MomentMethod.QUADRATURE
    return MomentMethod.CLOSED_FORM


def resolve_grid_method(method, beta_ratios: Sequence[float], need_g: bool = True) -> MomentMethod:
    """
    One moment method for a whole beta/beta_c grid.

    'auto' becomes quadrature as soon as any grid point needs it, so a scan
    never switches method between neighbouring points.
    """
    resolved = {resolve_method(method, float(r), need_g) for r in np.atleast_1d(beta_ratios)}
    if MomentMethod.QUADRATURE in resolved:
        return MomentMethod.QUADRATURE
    return resolved.pop()


def _target_function(target: ScanTarget, moments: PhotonMoments, pp: ProbeParams) -> Callable[[float], float]:
    if target == ScanTarget.CLASSICAL_G:
        return lambda t: classical_fi_g(moments, pp, t)
    if target == ScanTarget.QUANTUM_G:
        return lambda t: quantum_fi_g(moments, pp, t)
    return lambda t: fisher_matrix(moments, pp, t).f_eff


def _maximize_or_flat(fi_function, t_max, grid_points, label):
    try:
        return maximize_over_time(fi_function, t_max, grid_points)
    except FlatFunction:
        logger.info(f"{label}: no sensitivity, recording F = 0")
        return float('nan'), 0.0


def _check_grid(ratios) -> np.ndarray:
    ratios = np.asarray(ratios, dtype=float)
    if ratios.ndim != 1 or ratios.size < 2:
        raise InvalidParameters("beta/beta_c grid needs at least two points")
    if np.any(np.diff(ratios) <= 0) or np.any(ratios <= 0):
        raise InvalidParameters("beta/beta_c grid must be positive and strictly increasing")
    return ratios


def beta_scan(template: DickeParams, pp: ProbeParams, beta_ratios: Sequence[float] = DEFAULT_BETA_RATIOS,
              targets: Sequence[ScanTarget] = (ScanTarget.CLASSICAL_G, ScanTarget.QUANTUM_G),
              method='auto', threads: int = 1, grid_points: int = DEFAULT_GRID_POINTS) -> ScanResult:
    """
    Maximize each target FI over time at every beta/beta_c.

    Args:
        template: Dicke parameters; its beta is replaced by ratio * beta_c
        pp: probe parameters
        beta_ratios: strictly increasing grid
        targets: FI curves to compute
        method: 'closed', 'quadrature' or 'auto' (resolved once for the grid, see resolve_grid_method)
        threads: worker threads; results are assembled by grid index

    Returns:
        ScanResult
    """
    ratios = _check_grid(beta_ratios)
    targets = [ScanTarget(t) for t in targets]
    concrete = resolve_grid_method(method, ratios)

    def work(ratio):
        moments = moment_derivatives(template.with_beta_ratio(ratio), concrete)
        t_max = default_t_max(pp, moments)
        row = {
            target: _maximize_or_flat(_target_function(target, moments, pp), t_max, grid_points,
                                      f"{target.value} at beta/beta_c={ratio:.4g}")
            for target in targets
        }
        return row, concrete.value

    logger.info(f"beta scan: {ratios.size} points, targets {[t.value for t in targets]}, threads {threads}")
    with ThreadPoolExecutor(max_workers=max(1, int(threads))) as pool:
        rows = list(pool.map(work, ratios))

    curves = {
        target: ScanCurve(
            t_opt=np.array([row[target][0] for row, _ in rows]),
            f_max=np.array([row[target][1] for row, _ in rows]),
        )
        for target in targets
    }
    result = ScanResult(ratios, curves, tuple(m for _, m in rows))

    for target in targets:
        offset = result.peak_offset(target)
        if offset != 0:
            logger.warning(f"{target.value} FI peaks at beta/beta_c = {result.peak_ratio(target):.4g}, "
                           f"{offset:+d} grid steps from criticality")
    return result


# ============================================================
# Power-law fits
# ============================================================

def fit_power_law_arrays(beta_ratios, values, branch, window: Optional[Tuple[float, float]] = None,
                         target: Optional[ScanTarget] = None) -> PowerLawFit:
    """
    Least-squares line through (ln beta/beta_c, ln F) inside window.

    Raises:
        InvalidParameters: window not on the requested side of beta_c
        InsufficientPoints: fewer than 5 positive points in the window
    """
    branch = Branch(branch)
    if window is None:
        window = DEFAULT_NORMAL_WINDOW if branch == Branch.NORMAL else DEFAULT_SUPERRADIANT_WINDOW
    lo, hi = window
    if lo >= hi:
        raise InvalidParameters(f"empty fit window {window}")
    if branch == Branch.NORMAL and hi > 1.0 or branch == Branch.SUPERRADIANT and lo < 1.0:
        raise InvalidParameters(f"fit window {window} leaves the {branch.value} branch")

    ratios = np.asarray(beta_ratios, dtype=float)
    values = np.asarray(values, dtype=float)
    mask = (ratios >= lo) & (ratios <= hi) & (values > 0) & np.isfinite(values)
    n_points = int(mask.sum())
    if n_points < MIN_FIT_POINTS:
        raise InsufficientPoints(f"{n_points} usable points in window {window}, need {MIN_FIT_POINTS}")

    x = np.log(ratios[mask])
    y = np.log(values[mask])
    slope, intercept = np.polyfit(x, y, 1)
    residual = y - (slope * x + intercept)
    rms = float(np.sqrt(np.mean(residual ** 2)))
    exponent = float(slope) if branch == Branch.NORMAL else float(-slope)
    return PowerLawFit(branch, exponent, float(intercept), (float(lo), float(hi)), rms, n_points, target)


def fit_power_law(scan: ScanResult, branch, window: Optional[Tuple[float, float]] = None,
                  target=ScanTarget.QUANTUM_G) -> PowerLawFit:
    """Fit one curve of a beta scan; see fit_power_law_arrays."""
    target = ScanTarget(target)
    return fit_power_law_arrays(scan.beta_ratios, scan.curves[target].f_max, branch, window, target)


# ============================================================
# Ensembles
# ============================================================

def _ensemble_maximum(template, pp, ensemble, ratio, method, grid_points):
    moments = moment_derivatives(template.with_beta_ratio(ratio), method)
    t_max = default_t_max(pp, moments, ensemble.n_probes)
    label = f"{ensemble.kind.value} N={ensemble.n_probes} at beta/beta_c={ratio:.4g}"
    return _maximize_or_flat(lambda t: ensemble_qfi(moments, pp, t, ensemble), t_max, grid_points, label)


def ultimate_precision(template: DickeParams, pp: ProbeParams, ensemble: EnsembleSpec,
                       beta_ratios: Sequence[float] = DEFAULT_BETA_RATIOS, method='auto',
                       threads: int = 1, refine: bool = True,
                       grid_points: int = DEFAULT_GRID_POINTS) -> UltimatePrecision:
    """
    Maximum of the ensemble QFI over encoding time and temperature.

    Uncorrelated probes reuse the single-probe optimum times N. Otherwise the
    best grid point is refined by a bounded search in beta/beta_c between its
    neighbours. The moment method is resolved once for the grid.
    """
    ratios = _check_grid(beta_ratios)
    if ensemble.kind == EnsembleKind.UNCORRELATED and ensemble.n_probes > 1:
        single = ultimate_precision(template, pp, EnsembleSpec(1, EnsembleKind.UNCORRELATED), ratios,
                                    method, threads, refine, grid_points)
        return UltimatePrecision(ensemble.n_probes * single.value, single.beta_ratio, single.t_opt, ensemble)

    concrete = resolve_grid_method(method, ratios)
    with ThreadPoolExecutor(max_workers=max(1, int(threads))) as pool:
        maxima = list(pool.map(lambda r: _ensemble_maximum(template, pp, ensemble, r, concrete, grid_points), ratios))

    values = np.array([f for _, f in maxima])
    best = int(np.argmax(values))
    ratio_best, (t_best, f_best) = float(ratios[best]), maxima[best]

    if refine and f_best > 0:
        lo = ratios[max(best - 1, 0)]
        hi = ratios[min(best + 1, ratios.size - 1)]
        result = optimize.minimize_scalar(
            lambda r: -_ensemble_maximum(template, pp, ensemble, r, concrete, grid_points)[1],
            bounds=(lo, hi), method='bounded', options={'xatol': 1e-6})
        t_ref, f_ref = _ensemble_maximum(template, pp, ensemble, float(result.x), concrete, grid_points)
        if f_ref > f_best:
            ratio_best, t_best, f_best = float(result.x), t_ref, f_ref

    logger.info(f"ultimate precision {ensemble.kind.value} N={ensemble.n_probes}: "
                f"{f_best:.6g} at beta/beta_c={ratio_best:.6g}, t={t_best:.6g}")
    return UltimatePrecision(f_best, ratio_best, t_best, ensemble)


def scaling_fit(template: DickeParams, pp: ProbeParams, n_probes_list: Sequence[int], kind,
                w: float = 0.5, method='auto', beta_ratio: float = 1.0,
                grid_points: int = DEFAULT_GRID_POINTS) -> ScalingFit:
    """
    Maximal QFI over time at fixed beta/beta_c for each probe number, fitted by F = c N.

    c = sum(N F) / sum(N^2); R^2 uses the total sum of squares about the mean.

    Raises:
        InsufficientPoints: fewer than 4 probe numbers
    """
    kind = EnsembleKind(kind)
    n_values = np.array(sorted(set(int(n) for n in n_probes_list)))
    if n_values.size < MIN_SCALING_POINTS:
        raise InsufficientPoints(f"{n_values.size} probe numbers, need {MIN_SCALING_POINTS}")

    concrete = resolve_method(method, beta_ratio)
    moments = moment_derivatives(template.with_beta_ratio(beta_ratio), concrete)
    werner_w = w if kind == EnsembleKind.WERNER else None

    if kind == EnsembleKind.UNCORRELATED:
        single = EnsembleSpec(1, EnsembleKind.UNCORRELATED)
        t_single, f_single = _maximize_or_flat(lambda t: ensemble_qfi(moments, pp, t, single),
                                               default_t_max(pp, moments), grid_points, "single probe")
        values = n_values * f_single
        t_opt = np.full(n_values.shape, t_single)
    else:
        values = np.empty(n_values.shape)
        t_opt = np.empty(n_values.shape)
        for i, n in enumerate(n_values):
            spec = EnsembleSpec(int(n), kind, werner_w)
            t_opt[i], values[i] = _maximize_or_flat(lambda t: ensemble_qfi(moments, pp, t, spec),
                                                    default_t_max(pp, moments, int(n)), grid_points,
                                                    f"{kind.value} N={n}")

    n_float = n_values.astype(float)
    slope = float(np.dot(n_float, values) / np.dot(n_float, n_float))
    residual = values - slope * n_float
    ss_tot = float(np.sum((values - values.mean()) ** 2))
    r_squared = 1.0 - float(np.sum(residual ** 2)) / ss_tot if ss_tot > 0 else 1.0
    logger.info(f"scaling {kind.value}: slope {slope:.6g}, R^2 {r_squared:.6f} ({concrete.value} moments)")
    return ScalingFit(kind, n_values, values, t_opt, slope, 0.0, True, r_squared)
