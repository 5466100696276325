"""Threshold prediction sets and the i.i.d. PAC calibrators (PS, PS-C).

A prediction set is parameterized by a threshold ``tau``: a label is kept
when its score is at least ``tau``. Calibration only ever needs the
true-label scores of the held-out examples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .binom_stats import cp_upper, max_k_with_upper_at_most

METHODS = ("PS", "PS-C", "PS-R", "PS-M", "PS-W", "WSCI")


class ScoreSet:
    """True-label scores of a calibration set, kept sorted with a back-permutation."""

    def __init__(self, true_scores: Sequence[float]):
        scores = np.asarray(true_scores, dtype=float).ravel()
        if scores.size < 1:
            raise ValueError("a ScoreSet needs at least one score")
        if not np.all(np.isfinite(scores)):
            raise ValueError("scores must be finite")
        if np.any(scores < 0):
            raise ValueError("scores must be nonnegative")
        self.true_scores = scores
        self.true_scores.setflags(write=False)
        self.order = np.argsort(scores, kind="stable")
        self.sorted_scores = scores[self.order]
        self.sorted_scores.setflags(write=False)

    @property
    def m(self) -> int:
        return self.true_scores.size

    def __len__(self) -> int:
        return self.m

    def __repr__(self) -> str:
        return f"ScoreSet(m={self.m})"

    def subset(self, index) -> "ScoreSet":
        return ScoreSet(self.true_scores[index])


def as_score_set(scores) -> ScoreSet:
    return scores if isinstance(scores, ScoreSet) else ScoreSet(scores)


@dataclass(frozen=True)
class GridSpec:
    """Ascending grid ``start + t * step`` scanned by the grid calibrators."""

    step: float = 1e-7
    stop_factor: float = 1.5
    start: float = 0.0

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError(f"grid step must be positive, got {self.step}")
        if not self.stop_factor >= 1:
            raise ValueError(f"stop_factor must be >= 1, got {self.stop_factor}")
        if self.start < 0:
            raise ValueError("grid start must be nonnegative")

    def point(self, t: int) -> float:
        return self.start + t * self.step

    def last_index_at_most(self, x: float) -> int:
        """Largest t >= 0 with ``point(t) <= x``; -1 when ``x < start``."""
        if x < self.start:
            return -1
        if math.isinf(x):
            raise ValueError("unbounded grid segment")
        t = int(math.floor((x - self.start) / self.step))
        while t >= 0 and self.point(t) > x:
            t -= 1
        while self.point(t + 1) <= x:
            t += 1
        return t


@dataclass(frozen=True)
class TracePoint:
    """Bound over a run of grid thresholds that share one error pattern."""

    tau_first: float
    tau_last: float
    bound: float
    error_count: int
    n: int


@dataclass(frozen=True)
class CalibrationResult:
    tau_hat: float
    bound_at_tau: float
    error_count: int
    feasible: bool
    method: str
    n_accepted: int
    trace: tuple = field(default=(), compare=False)
    params: dict = field(default_factory=dict, compare=False)

    def core(self) -> dict:
        """Method-independent fields, used to compare calibrators that reduce to each other."""
        return {
            "tau_hat": self.tau_hat,
            "bound_at_tau": self.bound_at_tau,
            "error_count": self.error_count,
            "feasible": self.feasible,
            "n_accepted": self.n_accepted,
        }

    def to_dict(self) -> dict:
        out = {"method": self.method, **self.core(), "params": dict(self.params)}
        if self.trace:
            out["trace"] = [tp.__dict__.copy() for tp in self.trace]
        return out


def check_probability(name: str, value: float) -> float:
    value = float(value)
    if not 0.0 < value < 1.0:
        raise ValueError(f"{name} must lie in (0, 1), got {value!r}")
    return value


def empirical_error_count(scores, tau: float) -> int:
    """Number of calibration examples whose true label falls outside ``C_tau``."""
    s = as_score_set(scores)
    return int(np.searchsorted(s.sorted_scores, tau, side="left"))


def u_cp(scores, tau: float, delta: float) -> float:
    s = as_score_set(scores)
    return cp_upper(empirical_error_count(s, tau), s.m, delta)


# Bound evaluator for a scan: given ``c`` = number of sorted scores counted
# as errors, return (bound, error_count, n).
LevelBound = Callable[[int], "tuple[float, int, int]"]


def grid_scan(
    sorted_scores: np.ndarray,
    level_bound: LevelBound,
    epsilon: float,
    grid: Optional[GridSpec],
    break_on_violation: bool = True,
):
    """Ascending threshold scan, evaluated once per run of equivalent thresholds.

    Between consecutive distinct scores the error pattern (and so any bound
    depending on ``tau`` only through it) is constant, so visiting every grid
    point is equivalent to visiting these runs. With ``grid=None`` thresholds
    range over the continuum and the feasible supremum of a run is its right
    end, which is a score value.

    Returns ``(tau_hat, feasible, (bound, k, n) at tau_hat, trace)``.
    """
    levels, first = np.unique(sorted_scores, return_index=True)
    n_levels = len(levels)
    start = 0.0 if grid is None else grid.start
    stop_at = (1.0 if grid is None else grid.stop_factor) * epsilon

    tau_hat, feasible, best = 0.0, False, None
    trace = []
    for l in range(n_levels + 1):
        # run l: tau in (levels[l-1], levels[l]]; scores below levels[l] are errors
        c = int(first[l]) if l < n_levels else len(sorted_scores)
        left = levels[l - 1] if l > 0 else -math.inf
        right = levels[l] if l < n_levels else math.inf
        if right < start:
            continue
        if grid is None:
            tau_first, tau_last = max(float(left), start), float(right)
        else:
            t_lo = grid.last_index_at_most(left) + 1 if left >= start else 0
            t_hi = grid.last_index_at_most(right) if l < n_levels else t_lo
            if t_hi < t_lo:
                continue
            tau_first = grid.point(t_lo)
            tau_last = grid.point(t_hi) if l < n_levels else math.inf
        bound, k, n = level_bound(c)
        trace.append(TracePoint(tau_first, tau_last, bound, k, n))
        if bound <= epsilon:
            if l == n_levels:
                raise RuntimeError("bound feasible with every example misclassified")
            tau_hat, feasible, best = tau_last, True, (bound, k, n)
        elif break_on_violation or bound > stop_at:
            break
    return tau_hat, feasible, best, tuple(trace)


def _result_from_scan(scan, method, zero_bound, params, keep_trace):
    tau_hat, feasible, best, trace = scan
    if not feasible:
        best = zero_bound
    bound, k, n = best
    return CalibrationResult(
        tau_hat=float(tau_hat),
        bound_at_tau=float(bound),
        error_count=int(k),
        feasible=bool(feasible),
        method=method,
        n_accepted=int(n),
        trace=trace if keep_trace else (),
        params=params,
    )


def ps_exact(sorted_scores: np.ndarray, epsilon: float, delta: float):
    """Order-statistic solution of ``max tau s.t. U_CP(C_tau) <= epsilon``.

    Returns ``(tau_hat, feasible, error_count)``.
    """
    m = len(sorted_scores)
    k_star = max_k_with_upper_at_most(m, epsilon, delta)
    if k_star is None:
        return 0.0, False, 0
    if k_star >= m:  # pragma: no cover - cp_upper(m, m, .) = 1 > epsilon
        return float(sorted_scores[-1]) + 1.0, True, m
    tau_hat = float(sorted_scores[k_star])
    k = int(np.searchsorted(sorted_scores, tau_hat, side="left"))
    return tau_hat, True, k


def ps_calibrate(
    scores,
    epsilon: float,
    delta: float,
    grid: Optional[GridSpec] = None,
    *,
    method: str = "PS",
    keep_trace: bool = False,
) -> CalibrationResult:
    """PAC prediction set under the i.i.d. assumption.

    ``grid=None`` uses the exact order-statistic solver; passing a
    :class:`GridSpec` runs the ascending grid search with break on the first
    violated threshold.
    """
    epsilon = check_probability("epsilon", epsilon)
    delta = check_probability("delta", delta)
    s = as_score_set(scores)
    m = s.m
    params = {"epsilon": epsilon, "delta": delta, "mode": "exact" if grid is None else "grid"}
    if grid is None:
        tau_hat, feasible, k = ps_exact(s.sorted_scores, epsilon, delta)
        return CalibrationResult(
            tau_hat=tau_hat,
            bound_at_tau=cp_upper(k, m, delta),
            error_count=k,
            feasible=feasible,
            method=method,
            n_accepted=m,
            params=params,
        )

    def level_bound(c):
        return cp_upper(c, m, delta), c, m

    scan = grid_scan(s.sorted_scores, level_bound, epsilon, grid)
    zero = level_bound(empirical_error_count(s, 0.0))
    return _result_from_scan(scan, method, zero, params, keep_trace)


def ps_c_calibrate(
    scores,
    epsilon: float,
    delta: float,
    b: float,
    grid: Optional[GridSpec] = None,
) -> CalibrationResult:
    """PS run at ``epsilon / b``, valid for any shift whose weights never exceed ``b``."""
    epsilon = check_probability("epsilon", epsilon)
    if not b >= 1:
        raise ValueError(f"max importance weight bound b must be >= 1, got {b!r}")
    res = ps_calibrate(scores, epsilon / b, delta, grid, method="PS-C")
    return CalibrationResult(
        **{**res.core(), "method": "PS-C", "params": {**res.params, "epsilon": epsilon, "b": float(b)}}
    )


def label_counts_at(label_scores: np.ndarray, tau: float) -> np.ndarray:
    """Per-example prediction set sizes for a ``(n, n_labels)`` score matrix."""
    return np.count_nonzero(np.asarray(label_scores) >= tau, axis=1)


def evaluate(test_true_scores, test_label_score_counts, tau: float):
    """Return ``(error_rate, mean_size)`` of ``C_tau`` on a labeled test set."""
    true_scores = np.asarray(test_true_scores, dtype=float).ravel()
    counts = np.asarray(test_label_score_counts, dtype=float).ravel()
    if true_scores.size == 0 or true_scores.size != counts.size:
        raise ValueError(
            f"need equal, nonzero lengths; got {true_scores.size} scores and {counts.size} counts"
        )
    return float(np.mean(true_scores < tau)), float(np.mean(counts))
