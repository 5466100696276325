"""Binned importance-weight estimates with Clopper-Pearson uncertainty intervals.

Heuristic weights ``1/g - 1`` from a source-vs-target classifier ``g`` are
only used to group examples: the real estimate in each bin is the ratio of
target to source mass, and its uncertainty comes from two Clopper-Pearson
intervals per bin.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .binom_stats import cp_lower, cp_upper
from .predset import check_probability
from .robust import IWInterval, UnboundedWeightError, UncertaintySet

PROB_CLIP = 1e-6


class DegenerateBinsError(ValueError):
    pass


class EmptySourceBinError(ZeroDivisionError):
    pass


def clip_probs(probs, eps: float = PROB_CLIP) -> np.ndarray:
    return np.clip(np.asarray(probs, dtype=float), eps, 1.0 - eps)


def heuristic_iw(prob):
    """Importance weight implied by ``prob = g(source | x)``, i.e. ``1/prob - 1``.

    Works on scalars and arrays; probabilities must lie strictly inside (0, 1).
    """
    p = np.asarray(prob, dtype=float)
    if np.any(~(p > 0)) or np.any(~(p < 1)):
        raise ValueError("domain probabilities must lie strictly inside (0, 1); clip them first")
    w = 1.0 / p - 1.0
    return float(w) if w.ndim == 0 else w


@dataclass(frozen=True, eq=False)
class BinPartition:
    """Bins over heuristic weights: bin 0 is ``[0, e_1]``, bin j is ``(e_j, e_{j+1}]``.

    Values equal to an edge go to the lower bin. The last edge is ``+inf`` so
    every nonnegative value has a bin.
    """

    edges: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=float)
        if e.ndim != 1 or len(e) < 2:
            raise ValueError("need at least two edges")
        if e[0] != 0 or not np.isposinf(e[-1]):
            raise ValueError("edges must start at 0 and end at +inf")
        if np.any(np.diff(e) <= 0):
            raise ValueError("edges must be strictly ascending")
        object.__setattr__(self, "edges", e)

    def __eq__(self, other):
        if not isinstance(other, BinPartition):
            return NotImplemented
        return np.array_equal(self.edges, other.edges)

    __hash__ = None

    @property
    def K(self) -> int:
        return len(self.edges) - 1

    def bin_of(self, values) -> np.ndarray:
        v = np.asarray(values, dtype=float)
        if np.any(v < 0) or np.any(np.isnan(v)):
            raise ValueError("heuristic weights must be nonnegative")
        return np.searchsorted(self.edges[1:-1], v, side="left")

    def to_dict(self) -> dict:
        return {"edges": [float(x) for x in self.edges[:-1]] + ["inf"]}

    @classmethod
    def from_dict(cls, d: dict) -> "BinPartition":
        return cls(np.array([float(x) for x in d["edges"]]))


def build_equal_mass_bins(source_heuristic_iws, K: int = 10) -> BinPartition:
    """Cut points at empirical quantiles so each bin holds about the same count.

    Cuts are placed one at a time: each bin takes ``floor(remaining / bins
    left)`` of the values not yet assigned. A run of tied values at a cut
    stays together in the lower bin, and the values after it are again split
    evenly, so a large tie run never starves the later bins.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    v = np.sort(np.asarray(source_heuristic_iws, dtype=float).ravel())
    if len(v) < K:
        raise DegenerateBinsError(f"{len(v)} values cannot fill {K} bins")
    if np.any(v < 0) or not np.all(np.isfinite(v)):
        raise ValueError("heuristic weights must be finite and nonnegative")
    distinct = np.unique(v)
    L = len(distinct)
    if L < K:
        raise DegenerateBinsError(f"only {L} distinct heuristic weights for {K} bins")
    m = len(v)
    idx = []
    assigned, prev = 0, -1
    for j in range(1, K):
        take = max((m - assigned) // (K - j + 1), 1)
        pos = int(np.searchsorted(distinct, v[assigned + take - 1]))
        # strictly increasing edges, and one distinct value left for each later bin
        pos = min(max(pos, prev + 1), L - 1 - (K - j))
        idx.append(pos)
        prev = pos
        assigned = int(np.searchsorted(v, distinct[pos], side="right"))
    edges = np.concatenate([[0.0], distinct[idx], [np.inf]])
    if K > 1 and edges[1] == 0.0:
        raise DegenerateBinsError("lowest interior edge coincides with 0")
    return BinPartition(edges)


@dataclass(frozen=True)
class BinEstimates:
    source_counts: np.ndarray
    target_counts: np.ndarray
    smoothness: float = 0.001
    delta_w: float = 0.05

    def __post_init__(self):
        sc = np.asarray(self.source_counts, dtype=int)
        tc = np.asarray(self.target_counts, dtype=int)
        if sc.shape != tc.shape or sc.ndim != 1:
            raise ValueError("source and target counts must be 1-d and aligned")
        if sc.sum() < 1 or tc.sum() < 1:
            raise ValueError("need at least one source and one target example")
        if self.smoothness < 0:
            raise ValueError("smoothness E must be nonnegative")
        check_probability("delta_w", self.delta_w)
        object.__setattr__(self, "source_counts", sc)
        object.__setattr__(self, "target_counts", tc)

    @property
    def K(self) -> int:
        return len(self.source_counts)

    @property
    def m(self) -> int:
        return int(self.source_counts.sum())

    @property
    def n(self) -> int:
        return int(self.target_counts.sum())

    @property
    def p_hat(self) -> np.ndarray:
        return self.source_counts / self.m

    @property
    def q_hat(self) -> np.ndarray:
        return self.target_counts / self.n

    @property
    def delta_prime(self) -> float:
        # union bound over 2K Clopper-Pearson intervals
        return self.delta_w / (2 * self.K)

    def to_dict(self) -> dict:
        return {
            "source_counts": self.source_counts.tolist(),
            "target_counts": self.target_counts.tolist(),
            "smoothness": self.smoothness,
            "delta_w": self.delta_w,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BinEstimates":
        return cls(
            np.array(d["source_counts"]), np.array(d["target_counts"]), d["smoothness"], d["delta_w"]
        )


def bin_estimates(
    bins: BinPartition, source_iws, target_iws, smoothness: float = 0.001, delta_w: float = 0.05
) -> BinEstimates:
    sc = np.bincount(bins.bin_of(source_iws), minlength=bins.K)
    tc = np.bincount(bins.bin_of(target_iws), minlength=bins.K)
    return BinEstimates(sc, tc, smoothness, delta_w)


@dataclass(frozen=True)
class BinIWBounds:
    lower: np.ndarray
    upper: np.ndarray

    def to_dict(self) -> dict:
        enc = lambda a: [float(x) if np.isfinite(x) else "inf" for x in a]  # noqa: E731
        return {"lower": enc(self.lower), "upper": enc(self.upper)}

    @classmethod
    def from_dict(cls, d: dict) -> "BinIWBounds":
        return cls(np.array([float(x) for x in d["lower"]]), np.array([float(x) for x in d["upper"]]))


def _ratio(num, den):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(den > 0, num / np.where(den > 0, den, 1.0), np.inf)


def estimate_iw_bounds(bins: BinPartition, est: BinEstimates, *, interval: str = "clopper-pearson"):
    """Per-bin lower and upper importance weights.

    ``interval="point"`` replaces every Clopper-Pearson bound by the empirical
    fraction itself, which is the infinite-sample limit.
    """
    if bins.K != est.K:
        raise ValueError(f"partition has {bins.K} bins, estimates have {est.K}")
    E = est.smoothness
    if interval == "clopper-pearson":
        dp = est.delta_prime
        q_lo = np.array([cp_lower(int(c), est.n, dp) for c in est.target_counts])
        q_hi = np.array([cp_upper(int(c), est.n, dp) for c in est.target_counts])
        p_lo = np.array([cp_lower(int(c), est.m, dp) for c in est.source_counts])
        p_hi = np.array([cp_upper(int(c), est.m, dp) for c in est.source_counts])
    elif interval == "point":
        q_lo = q_hi = est.q_hat
        p_lo = p_hi = est.p_hat
    else:
        raise ValueError(f"unknown interval kind {interval!r}")
    lower = np.maximum(q_lo - E, 0.0) / (p_hi + E)
    lower = np.where(p_hi + E > 0, lower, 0.0)
    upper = _ratio(q_hi + E, np.maximum(p_lo - E, 0.0))
    return BinIWBounds(lower, upper)


def estimate_b(bounds: BinIWBounds) -> float:
    """Largest per-bin weight upper bound; raises if any bin is unbounded."""
    upper = np.asarray(bounds.upper, dtype=float)
    if upper.size == 0:
        raise ValueError("no bins")
    if np.any(np.isinf(upper)):
        j = int(np.flatnonzero(np.isinf(upper))[0])
        raise UnboundedWeightError(
            f"bin {j} has an unbounded importance weight (too few source examples); "
            "use more calibration data, fewer bins, or a smaller smoothness E"
        )
    return float(upper.max())


def point_iw(bins: BinPartition, est: BinEstimates, x_heuristic_iw):
    """Target-to-source mass ratio of the bin containing each value."""
    j = bins.bin_of(x_heuristic_iw)
    p = est.p_hat[j]
    if np.any(p == 0):
        raise EmptySourceBinError("point weight undefined: containing bin has no source examples")
    w = est.q_hat[j] / p
    return float(w) if np.ndim(w) == 0 else w


def interval_iw_per_example(bins: BinPartition, bounds: BinIWBounds, example_heuristic_iws) -> list:
    j = bins.bin_of(example_heuristic_iws)
    return [IWInterval(float(bounds.lower[i]), float(bounds.upper[i])) for i in np.atleast_1d(j)]


def uncertainty_set(bins: BinPartition, bounds: BinIWBounds, example_heuristic_iws, delta_w: float):
    """Array-backed equivalent of :func:`interval_iw_per_example`."""
    j = bins.bin_of(example_heuristic_iws)
    return UncertaintySet(bounds.lower[j], bounds.upper[j], delta_w)
