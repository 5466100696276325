"""PAC prediction sets under covariate shift."""

from .binom_stats import binom_cdf, cp_lower, cp_upper, k_max
from .estimators import BinnedImportanceWeights, PACPredictionSet
from .iw_estimation import (
    BinEstimates,
    BinIWBounds,
    BinPartition,
    build_equal_mass_bins,
    estimate_b,
    estimate_iw_bounds,
    heuristic_iw,
    interval_iw_per_example,
    point_iw,
)
from .predset import (
    CalibrationResult,
    GridSpec,
    ScoreSet,
    empirical_error_count,
    evaluate,
    ps_c_calibrate,
    ps_calibrate,
    u_cp,
)
from .rejection import RejectionInput, ps_r_calibrate, rejection_sample, u_rscp
from .robust import IWInterval, UncertaintySet, greedy_worst_case, ps_w_calibrate, robust_u_rscp
from .wsci import wsci_calibrate

__version__ = "0.1.0"

__all__ = [
    "binom_cdf",
    "cp_lower",
    "cp_upper",
    "k_max",
    "BinnedImportanceWeights",
    "PACPredictionSet",
    "BinEstimates",
    "BinIWBounds",
    "BinPartition",
    "build_equal_mass_bins",
    "estimate_b",
    "estimate_iw_bounds",
    "heuristic_iw",
    "interval_iw_per_example",
    "point_iw",
    "CalibrationResult",
    "GridSpec",
    "ScoreSet",
    "empirical_error_count",
    "evaluate",
    "ps_c_calibrate",
    "ps_calibrate",
    "u_cp",
    "RejectionInput",
    "ps_r_calibrate",
    "rejection_sample",
    "u_rscp",
    "IWInterval",
    "UncertaintySet",
    "greedy_worst_case",
    "ps_w_calibrate",
    "robust_u_rscp",
    "wsci_calibrate",
]
