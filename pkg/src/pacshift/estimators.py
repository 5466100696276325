"""scikit-learn style wrappers around the calibrators and the weight estimator."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .iw_estimation import (
    BinEstimates,
    BinIWBounds,
    BinPartition,
    bin_estimates,
    build_equal_mass_bins,
    clip_probs,
    estimate_b,
    estimate_iw_bounds,
    heuristic_iw,
    point_iw,
    uncertainty_set,
)
from .predset import GridSpec, evaluate, label_counts_at, ps_c_calibrate, ps_calibrate
from .rejection import ps_r_calibrate
from .robust import UncertaintySet, ps_w_calibrate


def _vector(x, name):
    return check_array(x, ensure_2d=False, input_name=name).ravel()


class BinnedImportanceWeights(TransformerMixin, BaseEstimator):
    """Per-bin importance-weight intervals from domain-classifier probabilities.

    ``fit`` takes ``g(source | x)`` for source and target examples;
    ``transform`` maps probabilities to ``(lower, upper)`` weight columns.
    """

    def __init__(self, n_bins=10, smoothness=0.001, delta_w=0.05, clip=1e-6):
        self.n_bins = n_bins
        self.smoothness = smoothness
        self.delta_w = delta_w
        self.clip = clip

    def _heuristic(self, probs):
        return heuristic_iw(clip_probs(_vector(probs, "probs"), self.clip))

    def fit(self, X, X_target):
        h_src = self._heuristic(X)
        h_tgt = self._heuristic(X_target)
        self.partition_ = build_equal_mass_bins(h_src, self.n_bins)
        self.estimates_ = bin_estimates(self.partition_, h_src, h_tgt, self.smoothness, self.delta_w)
        self.bounds_ = estimate_iw_bounds(self.partition_, self.estimates_)
        return self

    @property
    def b_(self) -> float:
        check_is_fitted(self, "bounds_")
        return estimate_b(self.bounds_)

    def transform(self, X):
        check_is_fitted(self, "bounds_")
        j = self.partition_.bin_of(self._heuristic(X))
        return np.column_stack([self.bounds_.lower[j], self.bounds_.upper[j]])

    def uncertainty_set(self, X) -> UncertaintySet:
        check_is_fitted(self, "bounds_")
        return uncertainty_set(self.partition_, self.bounds_, self._heuristic(X), self.delta_w)

    def point_weights(self, X):
        check_is_fitted(self, "bounds_")
        return point_iw(self.partition_, self.estimates_, self._heuristic(X))

    def to_dict(self) -> dict:
        check_is_fitted(self, "bounds_")
        try:
            b = self.b_
        except ValueError:
            b = None
        return {
            "params": self.get_params(),
            "partition": self.partition_.to_dict(),
            "estimates": self.estimates_.to_dict(),
            "bounds": self.bounds_.to_dict(),
            "b_hat": b,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BinnedImportanceWeights":
        est = cls(**d["params"])
        est.partition_ = BinPartition.from_dict(d["partition"])
        est.estimates_ = BinEstimates.from_dict(d["estimates"])
        est.bounds_ = BinIWBounds.from_dict(d["bounds"])
        return est


class PACPredictionSet(BaseEstimator):
    """Threshold prediction sets with a PAC guarantee on the target distribution.

    Parameters
    ----------
    method : {"ps", "ps-c", "ps-r", "ps-m", "ps-w"}
        ``ps`` assumes no shift. ``ps-c`` needs ``b``. ``ps-r`` and ``ps-m``
        take point importance weights as ``sample_weight``; ``ps-w`` takes
        weight intervals via ``iw_lower``/``iw_upper``.
    epsilon, delta : float
        Target error level and failure probability. For ``ps-w``, ``delta`` is
        split into ``delta_c`` and ``delta_w`` (half each unless given).
    b : float, optional
        Bound on the importance weights. Defaults to the largest weight (or
        weight upper bound) seen in ``fit``.
    grid_step : float, optional
        Scan thresholds on a grid of this step. ``None`` solves exactly
        (``ps-w`` then scans the scores themselves).
    random_state : int, optional
        Seed for the rejection-sampling uniforms.
    """

    def __init__(
        self,
        method="ps",
        epsilon=0.1,
        delta=0.1,
        delta_c=None,
        delta_w=None,
        b=None,
        grid_step=None,
        grid_stop_factor=1.5,
        random_state=None,
    ):
        self.method = method
        self.epsilon = epsilon
        self.delta = delta
        self.delta_c = delta_c
        self.delta_w = delta_w
        self.b = b
        self.grid_step = grid_step
        self.grid_stop_factor = grid_stop_factor
        self.random_state = random_state

    def _grid(self):
        if self.grid_step is None:
            return None
        return GridSpec(step=self.grid_step, stop_factor=self.grid_stop_factor)

    def fit(self, X, y=None, sample_weight=None, iw_lower=None, iw_upper=None):
        """Calibrate on the true-label scores ``X`` of held-out source examples."""
        scores = _vector(X, "X")
        grid = self._grid()
        method = self.method.lower()
        if method == "ps":
            res = ps_calibrate(scores, self.epsilon, self.delta, grid)
        elif method == "ps-c":
            if self.b is None:
                raise ValueError("ps-c needs an importance-weight bound b")
            res = ps_c_calibrate(scores, self.epsilon, self.delta, self.b, grid)
        elif method in ("ps-r", "ps-m"):
            if sample_weight is None:
                raise ValueError(f"{method} needs importance weights as sample_weight")
            w = _vector(sample_weight, "sample_weight")
            b = float(w.max()) if self.b is None else self.b
            res = ps_r_calibrate(
                scores, w, b, self.epsilon, self.delta, self.random_state, grid=grid,
                method=method.upper(),
            )
        elif method == "ps-w":
            if iw_lower is None or iw_upper is None:
                raise ValueError("ps-w needs iw_lower and iw_upper")
            delta_c = self.delta / 2 if self.delta_c is None else self.delta_c
            delta_w = self.delta / 2 if self.delta_w is None else self.delta_w
            W = UncertaintySet(iw_lower, iw_upper, delta_w)
            b = float(W.upper.max()) if self.b is None else self.b
            res = ps_w_calibrate(scores, W, b, self.epsilon, delta_c, grid, self.random_state)
        else:
            raise ValueError(f"unknown method {self.method!r}")
        self.result_ = res
        self.tau_ = res.tau_hat
        return self

    def predict(self, label_scores):
        """Boolean membership matrix for an ``(n, n_labels)`` score matrix."""
        check_is_fitted(self, "tau_")
        return check_array(label_scores) >= self.tau_

    def evaluate(self, true_scores, label_scores):
        """``(error_rate, mean_size)`` on labeled test data."""
        check_is_fitted(self, "tau_")
        return evaluate(true_scores, label_counts_at(check_array(label_scores), self.tau_), self.tau_)
