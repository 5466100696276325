"""Weighted split conformal baseline.

Nonconformity is the negated true-label score. For a test point with weight
``w_test`` the calibration scores are reweighted by their importance weights,
a point mass of weight ``w_test`` is placed at +inf, and the threshold is the
negated weighted (1 - epsilon)-quantile. This gives marginal coverage only;
there is no guarantee conditional on the calibration set.
"""

from __future__ import annotations

import numpy as np


def wsci_thresholds(cal_scores, cal_weights, test_weights, epsilon: float) -> np.ndarray:
    """Vectorized thresholds, one per test weight."""
    s = np.asarray(cal_scores, dtype=float).ravel()
    w = np.asarray(cal_weights, dtype=float).ravel()
    tw = np.atleast_1d(np.asarray(test_weights, dtype=float))
    if s.shape != w.shape:
        raise ValueError("cal_scores and cal_weights must have the same length")
    if not 0 < epsilon < 1:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon!r}")
    if np.any(w < 0) or np.any(tw < 0):
        raise ValueError("weights must be nonnegative")
    total = w.sum()
    if not total > 0:
        raise ValueError("calibration weights are all zero")
    # ascending nonconformity == descending score
    order = np.argsort(-s, kind="stable")
    s_desc = s[order]
    cum = np.cumsum(w[order])
    target = (1.0 - epsilon) * (total + tw)
    j = np.searchsorted(cum, target, side="left")
    # quantile at +inf (j == len) means the full label set
    out = np.zeros(len(tw))
    finite = j < len(s)
    out[finite] = s_desc[j[finite]]
    return np.maximum(out, 0.0)


def wsci_calibrate(cal_scores, cal_weights, test_weight: float, epsilon: float) -> float:
    return float(wsci_thresholds(cal_scores, cal_weights, [test_weight], epsilon)[0])
