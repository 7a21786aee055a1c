"""
critmet - Main Orchestrator

Subcommands compute the tables of the sensing scheme:
1. thermo       - order parameter, J_z and photon moments across beta/beta_c
2. fi-dynamics  - classical and quantum FI of g versus encoding time
3. fi-scan      - time-maximized FI across beta/beta_c, with power-law fits
4. scaling      - maximal QFI versus probe number (uncorrelated, Werner, GHZ)
5. multiparam   - effective QFI for joint (omega, g) estimation

Each writes CSV files (provenance header + rows + summary) to the output
directory. Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

import argparse
import logging
import os
import sys
from typing import List

import numpy as np

import config
from config import ConfigError, load_run_config
from sensing.dicke_thermo import (
    MomentMethod,
    moment_derivatives,
    order_parameter_jz,
    photon_moment_closed,
    photon_moment_quadrature,
    solve_order_parameter,
)
from sensing.errors import CritmetError, InsufficientPoints, InvalidParameters, InvalidRegime
from sensing.fisher import fisher_dynamics, fisher_matrix
from sensing.optimize import (
    Branch,
    ScanTarget,
    beta_scan,
    default_t_max,
    fit_power_law,
    resolve_grid_method,
    resolve_method,
    scaling_fit,
)
from sensing.probe import EnsembleKind
from storage import remove_outputs, write_csv

logger = logging.getLogger(__name__)

DYNAMICS_RATIOS = (0.5, 0.95, 1.05, 1.5)
UNITS = 'FI in 1/g^2, t in 1/epsilon, energies in epsilon'

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _metadata(cfg, **extra) -> dict:
    header = cfg.as_header()
    header['UNITS'] = UNITS
    header.update({k.upper(): str(v) for k, v in extra.items()})
    return header


def _out(cfg, name: str) -> str:
    return os.path.join(cfg.output_dir, name)


def _plot(cfg, written, path, x, curves, xlabel, ylabel, **kwargs):
    if not cfg.plot:
        return
    from plotting import line_plot
    written.append(line_plot(path, x, curves, xlabel, ylabel, **kwargs))


def _times(cfg, pp, moments) -> np.ndarray:
    t_max = cfg.t_max if cfg.t_max is not None else default_t_max(pp, moments)
    return np.linspace(0.0, t_max, cfg.t_steps)


# ============================================================
# Subcommands
# ============================================================

def cmd_thermo(cfg, written: List[str]) -> None:
    """z0, J_z/N, <n>, <n^2> on the beta/beta_c grid."""
    rows = []
    method = resolve_grid_method(cfg.method, cfg.beta_ratios(), need_g=False)
    for ratio in cfg.beta_ratios():
        p = cfg.dicke_params(ratio)
        if method == MomentMethod.QUADRATURE:
            n_mean, n2_mean = photon_moment_quadrature(p, 1), photon_moment_quadrature(p, 2)
        else:
            n_mean, n2_mean = photon_moment_closed(p, 1), photon_moment_closed(p, 2)
        rows.append((ratio, solve_order_parameter(p).z0, order_parameter_jz(p), n_mean, n2_mean, method.value))

    path = _out(cfg, 'thermo.csv')
    written.append(path)
    write_csv(path, ['beta_ratio', 'z0', 'j_z', 'n_mean', 'n2_mean', 'method'], rows, _metadata(cfg))
    ratios = [r[0] for r in rows]
    _plot(cfg, written, path, ratios, {'z0': [r[1] for r in rows], 'j_z': [r[2] for r in rows]},
          'beta/beta_c', 'order parameter', vline=1.0)


def cmd_fi_dynamics(cfg, written: List[str]) -> None:
    """F_g(t) and QFI_g(t); one file per beta/beta_c."""
    pp = cfg.probe_params()
    ratios = (cfg.beta_ratio,) if cfg.beta_ratio is not None else DYNAMICS_RATIOS
    for ratio in ratios:
        method = resolve_method(cfg.method, ratio)
        moments = moment_derivatives(cfg.dicke_params(ratio), method)
        records = fisher_dynamics(moments, pp, _times(cfg, pp, moments))

        best = max(records, key=lambda r: r.f_quantum)
        path = _out(cfg, f"fi_dynamics_b{ratio:.4g}.csv")
        written.append(path)
        write_csv(path, ['t', 'f_classical', 'f_quantum'],
                  [(r.t, r.f_classical, r.f_quantum) for r in records],
                  _metadata(cfg, beta_ratio_used=ratio, moment_method=method.value),
                  {'grid_max_f_quantum': best.f_quantum, 'grid_t_at_max': best.t})
        _plot(cfg, written, path, [r.t for r in records],
              {'classical': [r.f_classical for r in records], 'quantum': [r.f_quantum for r in records]},
              't', 'FI')
        logger.info(f"beta/beta_c={ratio}: max QFI {best.f_quantum:.6g} at t={best.t:.6g}")


def _fit_summary(scan, cfg, targets) -> dict:
    summary = {}
    windows = {Branch.NORMAL: cfg.fit_normal_window, Branch.SUPERRADIANT: cfg.fit_superradiant_window}
    for target in targets:
        summary[f"peak_beta_ratio_{target.value}"] = scan.peak_ratio(target)
        summary[f"peak_offset_steps_{target.value}"] = scan.peak_offset(target)
        for branch, window in windows.items():
            symbol = 'mu' if branch == Branch.NORMAL else 'nu'
            key = f"{symbol}_{target.value}"
            try:
                fit = fit_power_law(scan, branch, window, target)
            except InsufficientPoints as e:
                logger.warning(f"{key}: {e}")
                summary[key] = 'insufficient points'
                continue
            summary[key] = fit.exponent
            summary[f"{key}_sign"] = 'positive' if fit.exponent > 0 else 'negative' if fit.exponent < 0 else 'zero'
            summary[f"{key}_window"] = f"{window[0]}-{window[1]}"
            summary[f"{key}_rms_residual"] = fit.rms_residual
            summary[f"{key}_points"] = fit.n_points
    return summary


def cmd_fi_scan(cfg, written: List[str]) -> None:
    """Time-maximized classical and quantum FI across beta/beta_c plus power-law fits."""
    targets = (ScanTarget.CLASSICAL_G, ScanTarget.QUANTUM_G)
    scan = beta_scan(cfg.dicke_params(1.0), cfg.probe_params(), cfg.beta_ratios(), targets,
                     cfg.method, config.CRITMET_THREADS, cfg.time_grid_points)
    classical = scan.curves[ScanTarget.CLASSICAL_G]
    quantum = scan.curves[ScanTarget.QUANTUM_G]
    ratio = scan.fi_ratio()
    rows = [
        (scan.beta_ratios[i], quantum.t_opt[i], classical.f_max[i], quantum.f_max[i], classical.t_opt[i], ratio[i],
         scan.methods[i])
        for i in range(scan.beta_ratios.size)
    ]
    path = _out(cfg, 'fi_scan.csv')
    written.append(path)
    write_csv(path, ['beta_ratio', 't_opt', 'f_max_classical', 'f_max_quantum', 't_opt_classical', 'fi_ratio',
                     'method'],
              rows, _metadata(cfg), _fit_summary(scan, cfg, targets))
    _plot(cfg, written, path, scan.beta_ratios, {'classical': classical.f_max, 'quantum': quantum.f_max},
          'beta/beta_c', 'max FI', logy=True, vline=1.0)


def cmd_scaling(cfg, written: List[str]) -> None:
    """Maximal QFI versus probe number at fixed beta/beta_c."""
    pp = cfg.scaling_probe_params()
    template = cfg.dicke_params(1.0)
    ratio = cfg.beta_ratio if cfg.beta_ratio is not None else 1.0
    fits = {
        kind: scaling_fit(template, pp, cfg.n_probes, kind, cfg.werner_w, cfg.method, ratio, cfg.time_grid_points)
        for kind in (EnsembleKind.UNCORRELATED, EnsembleKind.WERNER, EnsembleKind.GHZ)
    }
    unc, werner, ghz = (fits[k] for k in (EnsembleKind.UNCORRELATED, EnsembleKind.WERNER, EnsembleKind.GHZ))
    rows = [(int(n), unc.values[i], werner.values[i], ghz.values[i]) for i, n in enumerate(unc.n_probes)]

    # Ordering actually found on the rows with N >= 2
    multi = unc.n_probes >= 2
    order = sorted(fits, key=lambda k: float(np.sum(fits[k].values[multi])), reverse=True)
    summary = {}
    for kind, fit in fits.items():
        summary[f"slope_{kind.value}"] = fit.slope
        summary[f"r_squared_{kind.value}"] = fit.r_squared
    summary['ordering'] = ' >= '.join(k.value for k in order)
    summary['beta_ratio'] = ratio

    path = _out(cfg, 'scaling.csv')
    written.append(path)
    write_csv(path, ['n_probes', 'f_unc', 'f_werner', 'f_ghz'], rows,
              _metadata(cfg, beta_ratio_used=ratio), summary)
    _plot(cfg, written, path, unc.n_probes, {k.value: f.values for k, f in fits.items()}, 'probes', 'max QFI')


def cmd_multiparam(cfg, written: List[str]) -> None:
    """Effective QFI Det/Tr: dynamics at BETA_RATIO if given, otherwise a beta/beta_c scan."""
    pp = cfg.probe_params()
    if cfg.beta_ratio is not None:
        method = resolve_method(cfg.method, cfg.beta_ratio)
        moments = moment_derivatives(cfg.dicke_params(cfg.beta_ratio), method)
        times = _times(cfg, pp, moments)
        values = [fisher_matrix(moments, pp, t).f_eff for t in times]
        path = _out(cfg, f"multiparam_b{cfg.beta_ratio:.4g}.csv")
        written.append(path)
        write_csv(path, ['t', 'f_eff'], zip(times, values),
                  _metadata(cfg, moment_method=method.value))
        _plot(cfg, written, path, times, {'effective': values}, 't', 'effective QFI')
        return

    scan = beta_scan(cfg.dicke_params(1.0), pp, cfg.beta_ratios(), (ScanTarget.EFFECTIVE_MULTIPARAM,),
                     cfg.method, config.CRITMET_THREADS, cfg.time_grid_points)
    curve = scan.curves[ScanTarget.EFFECTIVE_MULTIPARAM]
    path = _out(cfg, 'multiparam_scan.csv')
    written.append(path)
    write_csv(path, ['beta_ratio', 't_opt', 'f_eff_max', 'method'],
              zip(scan.beta_ratios, curve.t_opt, curve.f_max, scan.methods),
              _metadata(cfg),
              {'peak_beta_ratio': scan.peak_ratio(ScanTarget.EFFECTIVE_MULTIPARAM),
               'peak_offset_steps': scan.peak_offset(ScanTarget.EFFECTIVE_MULTIPARAM)})
    _plot(cfg, written, path, scan.beta_ratios, {'effective': curve.f_max}, 'beta/beta_c', 'max effective QFI', vline=1.0)


COMMANDS = {
    'thermo': cmd_thermo,
    'fi-dynamics': cmd_fi_dynamics,
    'fi-scan': cmd_fi_scan,
    'scaling': cmd_scaling,
    'multiparam': cmd_multiparam,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='critmet', description='Criticality-enhanced thermal sensing with a Dicke-model bath')
    parser.add_argument('command', choices=sorted(COMMANDS))
    parser.add_argument('--config', help='flat KEY=value run-config file')
    parser.add_argument('--beta-ratio', type=float, help='beta/beta_c for fi-dynamics, scaling and multiparam')
    parser.add_argument('--out', help='output directory')
    parser.add_argument('--method', choices=['closed', 'quadrature', 'auto'], help='photon-moment method')
    parser.add_argument('--plot', action='store_true', help='also write PNG figures')
    return parser


def main(argv=None) -> int:
    """
    Main workflow: parse flags → load config → run subcommand → write files

    Returns the process exit code; files of a failed run are removed.
    """
    args = build_parser().parse_args(argv)
    overrides = {
        'BETA_RATIO': args.beta_ratio,
        'OUTPUT_DIR': args.out,
        'METHOD': args.method,
        'PLOT': True if args.plot else None,
    }

    # ============================================================
    # STEP 1: Resolve configuration
    # ============================================================
    try:
        cfg = load_run_config(args.config, overrides)
    except ConfigError as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_CONFIG

    # ============================================================
    # STEP 2: Run the subcommand
    # ============================================================
    written: List[str] = []
    logger.info(f"Running {args.command} (method={cfg.method}, output={cfg.output_dir})")
    try:
        COMMANDS[args.command](cfg, written)
    except (InvalidParameters, InvalidRegime) as e:
        logger.error(f"Invalid parameters: {e}")
        remove_outputs(written)
        return EXIT_CONFIG
    except CritmetError as e:
        logger.error(f"Numerical failure in {args.command}: {e}")
        remove_outputs(written)
        return EXIT_NUMERICAL
    except (ValueError, ArithmeticError) as e:
        # numpy/scipy internals, e.g. a brentq bracket without a sign change
        logger.error(f"Numerical failure in {args.command}: {type(e).__name__}: {e}")
        remove_outputs(written)
        return EXIT_NUMERICAL

    # ============================================================
    # STEP 3: Log summary
    # ============================================================
    logger.info("=" * 60)
    logger.info(f"{args.command}: wrote {len(written)} file(s)")
    for path in written:
        logger.info(f"  - {path}")
    logger.info("=" * 60)
    return EXIT_OK


if __name__ == "__main__":
    logging.basicConfig(
        level=config.LOG_LEVEL,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )
    sys.exit(main())
