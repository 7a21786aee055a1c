"""Shared fixtures: Dicke parameters with beta_c = 1 and the two probe settings."""

import math

import numpy as np
import pytest

from sensing.dicke_thermo import DickeParams
from sensing.probe import ProbeParams

EPSILON = 1.0
G = 0.3
OMEGA = 4.0 * math.tanh(0.5) * G ** 2   # beta_c = 1 exactly
N_ATOMS = 50


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full-resolution scans that take minutes")


@pytest.fixture
def dicke():
    """Dicke template at beta = beta_c = 1."""
    return DickeParams(EPSILON, OMEGA, G, N_ATOMS, 1.0)


@pytest.fixture
def probe():
    return ProbeParams(omega_s=1.5, lam=0.1)


@pytest.fixture
def scaling_probe():
    return ProbeParams(omega_s=1.5, lam=1e-3)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
