"""Rejection sampling from source to target and the PS-R calibrator."""

from __future__ import annotations

import warnings
import zlib
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .binom_stats import cp_upper
from .predset import (
    CalibrationResult,
    GridSpec,
    ScoreSet,
    _result_from_scan,
    as_score_set,
    check_probability,
    grid_scan,
    ps_exact,
)


class WeightExceedsBoundWarning(UserWarning):
    """An importance weight is larger than the assumed maximum ``b``."""


def stream_rng(seed, stream: str) -> np.random.Generator:
    """Generator for a named stream derived from ``seed``.

    ``seed`` may be an int or a :class:`numpy.random.SeedSequence`; distinct
    stream names give independent generators.
    """
    key = zlib.crc32(stream.encode())
    if isinstance(seed, np.random.SeedSequence):
        ss = np.random.SeedSequence(seed.entropy, spawn_key=tuple(seed.spawn_key) + (key,))
    else:
        ss = np.random.SeedSequence(seed, spawn_key=(key,))
    return np.random.default_rng(ss)


def draw_uniforms(m: int, seed) -> np.ndarray:
    return stream_rng(seed, "rejection").random(m)


@dataclass(frozen=True)
class RejectionInput:
    scores: ScoreSet
    weights: np.ndarray
    b: float
    uniforms: np.ndarray

    def __post_init__(self):
        scores = as_score_set(self.scores)
        w = np.asarray(self.weights, dtype=float).ravel()
        v = np.asarray(self.uniforms, dtype=float).ravel()
        if not (len(w) == len(v) == scores.m):
            raise ValueError(
                f"length mismatch: {scores.m} scores, {len(w)} weights, {len(v)} uniforms"
            )
        if np.any(~np.isfinite(w)) or np.any(w < 0):
            raise ValueError("weights must be finite and nonnegative")
        if not self.b > 0 or not np.isfinite(self.b):
            raise ValueError(f"b must be a positive finite number, got {self.b!r}")
        if np.any((v < 0) | (v > 1)):
            raise ValueError("uniforms must lie in [0, 1]")
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "uniforms", v)

    @property
    def m(self) -> int:
        return self.scores.m


@dataclass(frozen=True)
class AcceptedSet:
    indices: np.ndarray

    @property
    def n(self) -> int:
        return len(self.indices)


def acceptance_mask(weights, b: float, uniforms) -> np.ndarray:
    """``V_i <= w_i / b``; ratios above one accept with certainty."""
    return np.asarray(uniforms) <= np.asarray(weights, dtype=float) / b


def rejection_sample(inp: RejectionInput) -> AcceptedSet:
    if np.any(inp.weights > inp.b):
        i = int(np.argmax(inp.weights))
        warnings.warn(
            f"importance weight {inp.weights[i]:.6g} at index {i} exceeds b={inp.b:.6g}; "
            "the rejection-sampling guarantee does not hold",
            WeightExceedsBoundWarning,
            stacklevel=2,
        )
    mask = acceptance_mask(inp.weights, inp.b, inp.uniforms)
    return AcceptedSet(np.flatnonzero(mask))


def u_rscp(inp: RejectionInput, tau: float, delta: float) -> float:
    """Clopper-Pearson bound computed on the rejection-sampled subsample."""
    acc = acceptance_mask(inp.weights, inp.b, inp.uniforms)
    n = int(np.count_nonzero(acc))
    if n == 0:
        return 1.0
    k = int(np.count_nonzero(acc & (inp.scores.true_scores < tau)))
    return cp_upper(k, n, delta)


def ps_r_calibrate(
    scores,
    weights,
    b: float,
    epsilon: float,
    delta: float,
    seed=None,
    *,
    uniforms=None,
    grid: Optional[GridSpec] = None,
    method: str = "PS-R",
    keep_trace: bool = False,
) -> CalibrationResult:
    """PAC prediction set for covariate shift with known importance weights.

    Draws ``V`` once (from ``seed``'s "rejection" stream unless ``uniforms``
    is given), keeps the accepted subsample, and solves the i.i.d. problem on
    it. The accepted set does not depend on ``tau``, so the exact solver and
    the grid scan (``grid=...``) agree up to one grid step.
    """
    epsilon = check_probability("epsilon", epsilon)
    delta = check_probability("delta", delta)
    s = as_score_set(scores)
    if uniforms is None:
        uniforms = draw_uniforms(s.m, seed)
    inp = RejectionInput(s, weights, float(b), uniforms)
    accepted = rejection_sample(inp)
    params = {
        "epsilon": epsilon,
        "delta": delta,
        "b": float(b),
        "mode": "exact" if grid is None else "grid",
    }
    n = accepted.n
    if n == 0:
        return CalibrationResult(0.0, 1.0, 0, False, method, 0, params=params)
    acc_sorted = np.sort(s.true_scores[accepted.indices])
    if grid is None:
        tau_hat, feasible, k = ps_exact(acc_sorted, epsilon, delta)
        return CalibrationResult(
            tau_hat=tau_hat,
            bound_at_tau=cp_upper(k, n, delta),
            error_count=k,
            feasible=feasible,
            method=method,
            n_accepted=n,
            params=params,
        )

    def level_bound(c):
        return cp_upper(c, n, delta), c, n

    scan = grid_scan(acc_sorted, level_bound, epsilon, grid)
    k0 = int(np.searchsorted(acc_sorted, grid.start, side="left"))
    return _result_from_scan(scan, method, level_bound(k0), params, keep_trace)
