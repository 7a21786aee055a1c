"""
Numerical helpers shared by the sensing modules.

Overflow-safe hyperbolic functions and a central finite difference.
"""

import numpy as np

# Below this argument coth(x) - 1 is taken from its Laurent series.
COTH_SERIES_THRESHOLD = 1e-6

# Relative step for central finite differences.
FD_REL_STEP = 1e-5


def ln2cosh(x):
    """
    ln(2 cosh x) without overflow.

    Uses ln(2 cosh x) = |x| + ln(1 + e^(-2|x|)), finite for x = 1e4 and beyond.
    Accepts scalars or numpy arrays.
    """
    ax = np.abs(x)
    return ax + np.log1p(np.exp(-2.0 * ax))


def sech2(x):
    """sech^2(x) computed from e^(-2|x|), so it underflows to 0 instead of overflowing."""
    e = np.exp(-2.0 * np.abs(x))
    return 4.0 * e / (1.0 + e) ** 2


def coth_minus_one(x):
    """
    coth(x) - 1 for x > 0.

    For x < 1e-6 the series 1/x - 1 + x/3 is used; otherwise 2/expm1(2x),
    which keeps full precision for large x where coth(x) - 1 ~ 2e^(-2x).
    """
    x = np.asarray(x, dtype=float)
    small = x < COTH_SERIES_THRESHOLD
    with np.errstate(divide='ignore', over='ignore'):
        series = 1.0 / x - 1.0 + x / 3.0
        exact = 2.0 / np.expm1(2.0 * x)
    out = np.where(small, series, exact)
    return out if out.ndim else float(out)


def central_difference(f, x: float, rel_step: float = FD_REL_STEP) -> float:
    """
    Central finite difference (f(x+h) - f(x-h)) / 2h with h = rel_step * |x|.

    Args:
        f: scalar function of one float
        x: evaluation point (non-zero)
        rel_step: relative step, default 1e-5

    Returns:
        float: derivative estimate
    """
    h = rel_step * abs(x) if x != 0 else rel_step
    return (f(x + h) - f(x - h)) / (2.0 * h)
