"""Exact binomial CDF and Clopper-Pearson bounds.

The binomial CDF is evaluated through the regularized incomplete beta
function, ``F(k; m, theta) = 1 - I_theta(k + 1, m - k)``, so large trial
counts stay fast and accurate. The complemented form is evaluated directly
at ``theta``; forming ``1 - theta`` first costs about 1e-12 at m = 10^6.
The upper bound is found by bisection on the monotone CDF; the lower bound
is obtained by duality.
"""

from __future__ import annotations

from functools import lru_cache
from numbers import Integral
from typing import Optional

from scipy.special import betaincc

ROOT_TOL = 1e-10
MAX_BISECT_ITER = 200


def _check_counts(k, m):
    if not isinstance(k, Integral) or not isinstance(m, Integral):
        raise ValueError(f"k and m must be integers, got k={k!r}, m={m!r}")
    if m < 0 or k < 0 or k > m:
        raise ValueError(f"need 0 <= k <= m, got k={k}, m={m}")


def _check_open_unit(name, value):
    if not 0.0 < value < 1.0:
        raise ValueError(f"{name} must lie in (0, 1), got {value!r}")


def binom_cdf(k: int, m: int, theta: float) -> float:
    """P[X <= k] for X ~ Binomial(m, theta)."""
    _check_counts(k, m)
    if not 0.0 <= theta <= 1.0:
        raise ValueError(f"theta must lie in [0, 1], got {theta!r}")
    if k == m:
        return 1.0
    if theta == 0.0:
        return 1.0
    if theta == 1.0:
        return 0.0
    return float(betaincc(k + 1, m - k, theta))


@lru_cache(maxsize=1 << 16)
def _cp_upper(k: int, m: int, delta: float) -> float:
    if k == m:
        return 1.0
    # invariant: F(k; m, lo) > delta >= F(k; m, hi)
    lo, hi = 0.0, 1.0
    for _ in range(MAX_BISECT_ITER):
        if hi - lo <= ROOT_TOL:
            break
        mid = 0.5 * (lo + hi)
        if binom_cdf(k, m, mid) <= delta:
            hi = mid
        else:
            lo = mid
    return hi


def cp_upper(k: int, m: int, delta: float) -> float:
    """Clopper-Pearson upper bound ``inf{theta : F(k; m, theta) <= delta}``.

    Returns 1 when no theta qualifies (always the case for ``k == m``). The
    returned value is the upper end of the final bisection bracket, so
    ``binom_cdf(k, m, cp_upper(k, m, delta)) <= delta`` holds as computed.
    """
    _check_counts(k, m)
    _check_open_unit("delta", delta)
    if m == 0:
        return 1.0
    return _cp_upper(int(k), int(m), float(delta))


def cp_lower(k: int, m: int, delta: float) -> float:
    """Clopper-Pearson lower bound, via ``1 - cp_upper(m - k, m, delta)``."""
    _check_counts(k, m)
    _check_open_unit("delta", delta)
    if k == 0:
        return 0.0
    return 1.0 - cp_upper(m - k, m, delta)


def k_max(m: int, epsilon: float, delta: float) -> Optional[int]:
    """Largest k with ``F(k; m, epsilon) <= delta``, or None if k=0 fails."""
    if not isinstance(m, Integral) or m < 1:
        raise ValueError(f"m must be a positive integer, got {m!r}")
    _check_open_unit("epsilon", epsilon)
    _check_open_unit("delta", delta)
    if binom_cdf(0, m, epsilon) > delta:
        return None
    # F(k; m, eps) is increasing in k and F(m; m, eps) = 1 > delta
    lo, hi = 0, m
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if binom_cdf(mid, m, epsilon) <= delta:
            lo = mid
        else:
            hi = mid
    return lo


def max_k_with_upper_at_most(m: int, epsilon: float, delta: float) -> Optional[int]:
    """Largest k with ``cp_upper(k, m, delta) <= epsilon``, or None.

    Mathematically identical to :func:`k_max`; this form is the one the
    calibrators use so their feasibility checks agree bit-for-bit with the
    bound values they report.
    """
    if m == 0 or cp_upper(0, m, delta) > epsilon:
        return None
    lo, hi = 0, m  # cp_upper(m, m, .) = 1 > epsilon
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if cp_upper(mid, m, delta) <= epsilon:
            lo = mid
        else:
            hi = mid
    return lo
