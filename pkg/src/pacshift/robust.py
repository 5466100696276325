"""Worst-case rejection-sampling bound over an interval uncertainty set (PS-W)."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .binom_stats import cp_upper
from .predset import (
    CalibrationResult,
    GridSpec,
    _result_from_scan,
    as_score_set,
    check_probability,
    grid_scan,
)
from .rejection import RejectionInput, draw_uniforms, u_rscp


class UnboundedWeightError(ValueError):
    """An importance-weight upper bound is infinite where a finite one is required."""


@dataclass(frozen=True)
class IWInterval:
    lower: float
    upper: float

    def __post_init__(self):
        if not (0 <= self.lower <= self.upper):
            raise ValueError(f"need 0 <= lower <= upper, got [{self.lower}, {self.upper}]")


class UncertaintySet:
    """Box of per-example importance weights, ``lower_i <= w_i <= upper_i``.

    ``delta_w`` is the failure probability of the box containing the true
    weights; it is carried along for bookkeeping only.
    """

    def __init__(self, lower, upper, delta_w: float = 0.05):
        lower = np.asarray(lower, dtype=float).ravel()
        upper = np.asarray(upper, dtype=float).ravel()
        if lower.shape != upper.shape:
            raise ValueError("lower and upper must have the same length")
        if np.any(np.isnan(lower)) or np.any(np.isnan(upper)):
            raise ValueError("interval ends must not be NaN")
        if np.any(lower < 0) or np.any(lower > upper):
            raise ValueError("need 0 <= lower <= upper for every interval")
        self.lower = lower
        self.upper = upper
        self.delta_w = check_probability("delta_w", delta_w)

    @classmethod
    def from_intervals(cls, intervals: Sequence[IWInterval], delta_w: float = 0.05):
        return cls([iv.lower for iv in intervals], [iv.upper for iv in intervals], delta_w)

    @classmethod
    def degenerate(cls, weights, delta_w: float = 0.05):
        w = np.asarray(weights, dtype=float)
        return cls(w, w.copy(), delta_w)

    @property
    def intervals(self) -> list:
        return [IWInterval(float(lo), float(hi)) for lo, hi in zip(self.lower, self.upper)]

    def __len__(self) -> int:
        return len(self.lower)

    def contains(self, weights) -> bool:
        w = np.asarray(weights, dtype=float)
        return bool(np.all((self.lower <= w) & (w <= self.upper)))


def greedy_worst_case(scores, tau: float, W: UncertaintySet) -> np.ndarray:
    """Upper ends on misclassified examples, lower ends elsewhere."""
    s = as_score_set(scores)
    if len(W) != s.m:
        raise ValueError(f"uncertainty set has {len(W)} intervals for {s.m} scores")
    return np.where(s.true_scores < tau, W.upper, W.lower)


def robust_u_rscp(scores, tau: float, W: UncertaintySet, b: float, uniforms, delta_c: float) -> float:
    """Maximum of the rejection-sampling bound over every weight vector in ``W``."""
    s = as_score_set(scores)
    w_hat = greedy_worst_case(s, tau, W)
    return u_rscp(RejectionInput(s, w_hat, b, uniforms), tau, delta_c)


def ps_w_calibrate(
    scores,
    W: UncertaintySet,
    b: float,
    epsilon: float,
    delta_c: float,
    grid: Optional[GridSpec] = GridSpec(),
    seed=None,
    *,
    uniforms=None,
    break_on_violation: bool = True,
    method: str = "PS-W",
    keep_trace: bool = False,
) -> CalibrationResult:
    """PAC prediction set robust to importance-weight uncertainty.

    ``V`` is drawn once. At every threshold the worst-case weights are rebuilt
    and the accepted set recomputed, so acceptance depends on ``tau``. The
    scan stops at the first violated threshold by default; with
    ``break_on_violation=False`` it continues until the bound exceeds
    ``grid.stop_factor * epsilon`` and keeps the largest feasible threshold.
    The result holds with probability at least ``1 - delta_c - W.delta_w``.
    """
    epsilon = check_probability("epsilon", epsilon)
    delta_c = check_probability("delta_c", delta_c)
    s = as_score_set(scores)
    if len(W) != s.m:
        raise ValueError(f"uncertainty set has {len(W)} intervals for {s.m} scores")
    b = float(b)
    if math.isinf(b) or not b > 0:
        raise UnboundedWeightError(f"b must be positive and finite, got {b}")
    if np.any(np.isinf(W.upper)):
        i = int(np.flatnonzero(np.isinf(W.upper))[0])
        raise UnboundedWeightError(f"example {i} has an infinite weight upper bound while b={b}")
    if uniforms is None:
        uniforms = draw_uniforms(s.m, seed)
    v = np.asarray(uniforms, dtype=float)
    # validates lengths and ranges
    RejectionInput(s, W.upper, b, v)

    order = s.order
    acc_err = (v <= W.upper / b)[order]
    acc_cov = (v <= W.lower / b)[order]
    cum_err = np.concatenate([[0], np.cumsum(acc_err)])
    cum_cov = np.concatenate([[0], np.cumsum(acc_cov)])
    total_cov = int(cum_cov[-1])

    def level_bound(c):
        # first c sorted examples are errors
        k = int(cum_err[c])
        n = k + total_cov - int(cum_cov[c])
        return (cp_upper(k, n, delta_c) if n else 1.0), k, n

    params = {
        "epsilon": epsilon,
        "delta_c": delta_c,
        "delta_w": W.delta_w,
        "b": b,
        "mode": "exact" if grid is None else "grid",
        "break_on_violation": break_on_violation,
    }
    scan = grid_scan(s.sorted_scores, level_bound, epsilon, grid, break_on_violation)
    start = 0.0 if grid is None else grid.start
    zero = level_bound(int(np.searchsorted(s.sorted_scores, start, side="left")))
    return _result_from_scan(scan, method, zero, params, keep_trace)
