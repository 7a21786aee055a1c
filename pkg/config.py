"""
Configuration settings for critmet.

Environment variables (optionally from a .env file) control logging,
threads and the default output directory. Run parameters come from flat
KEY=value config files. Defaults put the transition at beta_c = 1/epsilon with
N = 50 atoms and a probe at lambda = 0.1, omega_s = 1.5.
"""

import logging
import math
import os
from dataclasses import asdict, dataclass, fields
from typing import Optional, Tuple

import numpy as np
from dotenv import dotenv_values, load_dotenv

from sensing.dicke_thermo import DickeParams, critical_beta
from sensing.errors import CritmetError, InvalidParameters, InvalidRegime, NoTransition
from sensing.probe import ProbeParams, effective_probe_params

logger = logging.getLogger(__name__)

# Load environment variables from .env file
load_dotenv()

# Logging settings
LOG_LEVEL = os.getenv('LOG_LEVEL', 'INFO')


def _thread_count(raw: str) -> int:
    try:
        threads = int(raw)
    except ValueError:
        threads = 0
    if threads < 1:
        logger.warning(f"CRITMET_THREADS={raw!r} is not a positive integer; using 1 thread")
        return 1
    return threads


# Worker threads for temperature scans
CRITMET_THREADS = _thread_count(os.getenv('CRITMET_THREADS', '1'))

# Storage settings
OUTPUT_DIR = os.getenv('CRITMET_OUTPUT_DIR', 'output')

METHODS = ('closed', 'quadrature', 'auto')


class ConfigError(CritmetError):
    """Unknown key, unparsable value or inconsistent run configuration."""


def unit_critical_omega(epsilon: float, g: float) -> float:
    """Cavity frequency 4 tanh(epsilon/2) g^2 / epsilon, which puts beta_c at exactly 1/epsilon."""
    return 4.0 * math.tanh(0.5 * epsilon) * g ** 2 / epsilon


@dataclass(frozen=True)
class RunConfig:
    """Resolved run parameters for one CLI invocation."""
    epsilon: float = 1.0
    g: float = 0.3
    omega: Optional[float] = None           # None: unit_critical_omega(epsilon, g)
    n_atoms: int = 50
    omega_s: float = 1.5
    lam: float = 0.1
    omega_q: Optional[float] = None         # raw precursors; all three or none
    g_qc: Optional[float] = None
    delta_q: Optional[float] = None
    method: str = 'auto'
    beta_ratio_min: float = 0.5
    beta_ratio_max: float = 1.5
    beta_steps: int = 101
    beta_ratio: Optional[float] = None
    t_max: Optional[float] = None           # None: decay rule of optimize.default_t_max
    t_steps: int = 401
    time_grid_points: int = 400
    n_probes: Tuple[int, ...] = tuple(range(1, 11))
    werner_w: float = 0.5
    scaling_lambda: float = 1e-3
    fit_normal_window: Tuple[float, float] = (0.85, 0.99)
    fit_superradiant_window: Tuple[float, float] = (1.01, 1.15)
    output_dir: str = OUTPUT_DIR
    plot: bool = False

    @property
    def resolved_omega(self) -> float:
        return self.omega if self.omega is not None else unit_critical_omega(self.epsilon, self.g)

    def dicke_params(self, beta_ratio: float = 1.0) -> DickeParams:
        template = DickeParams(self.epsilon, self.resolved_omega, self.g, self.n_atoms, 1.0)
        return template.with_beta_ratio(beta_ratio)

    def probe_params(self) -> ProbeParams:
        """Probe used by the single-probe commands; built from the precursors when they are set."""
        if self.omega_q is not None:
            return effective_probe_params(self.omega_q, self.g_qc, self.delta_q, self.resolved_omega)
        return ProbeParams(self.omega_s, self.lam)

    def scaling_probe_params(self) -> ProbeParams:
        return ProbeParams(self.omega_s, self.scaling_lambda)

    def beta_ratios(self) -> np.ndarray:
        return np.linspace(self.beta_ratio_min, self.beta_ratio_max, self.beta_steps)

    def as_header(self) -> dict:
        """Flat KEY -> string mapping of every resolved value, for output provenance."""
        header = {}
        for key, value in asdict(self).items():
            if key == 'omega':
                value = self.resolved_omega
            if isinstance(value, tuple):
                value = ','.join(str(v) for v in value)
            header[key.upper() if key != 'lam' else 'LAMBDA'] = str(value)
        return header


# ============================================================
# Parsing
# ============================================================

def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ('1', 'true', 'yes', 'on'):
        return True
    if lowered in ('0', 'false', 'no', 'off', ''):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_pair(text: str) -> Tuple[float, float]:
    parts = [float(x) for x in text.split(',')]
    if len(parts) != 2:
        raise ValueError(f"expected 'lo,hi', got {text!r}")
    return parts[0], parts[1]


def _parse_probes(text: str) -> Tuple[int, ...]:
    """'1-10' or '1,2,4,8'."""
    text = text.strip()
    if '-' in text and ',' not in text:
        lo, hi = (int(x) for x in text.split('-'))
        return tuple(range(lo, hi + 1))
    return tuple(int(x) for x in text.split(','))


def _optional_float(text: str) -> Optional[float]:
    return None if text.strip().lower() in ('', 'none') else float(text)


# File key -> (RunConfig field, parser)
KEYS = {
    'EPSILON': ('epsilon', float),
    'G': ('g', float),
    'OMEGA': ('omega', _optional_float),
    'N_ATOMS': ('n_atoms', int),
    'OMEGA_S': ('omega_s', float),
    'LAMBDA': ('lam', float),
    'OMEGA_Q': ('omega_q', _optional_float),
    'G_QC': ('g_qc', _optional_float),
    'DELTA_Q': ('delta_q', _optional_float),
    'METHOD': ('method', str),
    'BETA_RATIO_MIN': ('beta_ratio_min', float),
    'BETA_RATIO_MAX': ('beta_ratio_max', float),
    'BETA_STEPS': ('beta_steps', int),
    'BETA_RATIO': ('beta_ratio', _optional_float),
    'T_MAX': ('t_max', _optional_float),
    'T_STEPS': ('t_steps', int),
    'TIME_GRID_POINTS': ('time_grid_points', int),
    'N_PROBES': ('n_probes', _parse_probes),
    'WERNER_W': ('werner_w', float),
    'SCALING_LAMBDA': ('scaling_lambda', float),
    'FIT_NORMAL_WINDOW': ('fit_normal_window', _parse_pair),
    'FIT_SUPERRADIANT_WINDOW': ('fit_superradiant_window', _parse_pair),
    'OUTPUT_DIR': ('output_dir', str),
    'PLOT': ('plot', _parse_bool),
}


def _validate(cfg: RunConfig) -> None:
    if cfg.method not in METHODS:
        raise ConfigError(f"METHOD must be one of {METHODS}, got {cfg.method!r}")
    precursors = (cfg.omega_q, cfg.g_qc, cfg.delta_q)
    if any(v is not None for v in precursors) and not all(v is not None for v in precursors):
        raise ConfigError("OMEGA_Q, G_QC and DELTA_Q must be given together")
    if not 0 < cfg.beta_ratio_min < cfg.beta_ratio_max:
        raise ConfigError("need 0 < BETA_RATIO_MIN < BETA_RATIO_MAX")
    if cfg.beta_steps < 2 or cfg.t_steps < 2 or cfg.time_grid_points < 3:
        raise ConfigError("BETA_STEPS and T_STEPS must be >= 2, TIME_GRID_POINTS >= 3")
    if cfg.beta_ratio is not None and cfg.beta_ratio <= 0:
        raise ConfigError(f"BETA_RATIO must be positive, got {cfg.beta_ratio}")
    if cfg.t_max is not None and cfg.t_max <= 0:
        raise ConfigError(f"T_MAX must be positive, got {cfg.t_max}")
    if not cfg.n_probes or min(cfg.n_probes) < 1:
        raise ConfigError(f"N_PROBES must list positive integers, got {cfg.n_probes}")
    if not 0.0 <= cfg.werner_w <= 1.0:
        raise ConfigError(f"WERNER_W must lie in [0, 1], got {cfg.werner_w}")
    for name, (lo, hi) in (('FIT_NORMAL_WINDOW', cfg.fit_normal_window),
                           ('FIT_SUPERRADIANT_WINDOW', cfg.fit_superradiant_window)):
        if lo >= hi:
            raise ConfigError(f"{name} must satisfy lo < hi, got {(lo, hi)}")

    # Physical invariants, checked before any computation
    try:
        critical_beta(cfg.dicke_params(1.0))
        cfg.probe_params()
        cfg.scaling_probe_params()
    except NoTransition as e:
        raise ConfigError(f"no superradiant transition for these parameters: {e}") from e
    except (InvalidParameters, InvalidRegime) as e:
        raise ConfigError(str(e)) from e


def load_run_config(path: Optional[str] = None, overrides: Optional[dict] = None) -> RunConfig:
    """
    Build a RunConfig from defaults, an optional KEY=value file and overrides.

    Args:
        path: config file parsed with python-dotenv; '#' comments allowed
        overrides: KEY -> value (CLI flags); None values are ignored

    Returns:
        RunConfig

    Raises:
        ConfigError: missing file, unknown key, bad value or invalid physics

    Example:
        cfg = load_run_config('run.cfg', {'BETA_RATIO': 1.05})
    """
    raw = {}
    if path is not None:
        if not os.path.exists(path):
            raise ConfigError(f"config file {path} not found")
        raw.update(dotenv_values(path))
        logger.info(f"Loaded run config from {path}")
    for key, value in (overrides or {}).items():
        if value is not None:
            raw[key] = value

    unknown = sorted(set(raw) - set(KEYS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")

    values = {}
    for key, value in raw.items():
        name, parser = KEYS[key]
        if value is None:
            continue
        try:
            values[name] = value if not isinstance(value, str) else parser(value)
        except ValueError as e:
            raise ConfigError(f"bad value for {key}: {value!r} ({e})") from e

    known = {f.name for f in fields(RunConfig)}
    cfg = RunConfig(**{k: v for k, v in values.items() if k in known})
    _validate(cfg)
    return cfg
