"""Monte Carlo validation of the calibrators on the synthetic shift."""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .iw_estimation import (
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
from .rejection import draw_uniforms, ps_r_calibrate
from .robust import UncertaintySet, ps_w_calibrate
from .synthetic import ShiftData, TwoGaussianConfig, sample_calibration, sample_test
from .wsci import wsci_thresholds

ALL_METHODS = ("ps", "ps-c", "ps-r", "ps-m", "ps-w", "wsci")
SIZE_QUANTILES = (0.1, 0.5, 0.9)


@dataclass(frozen=True)
class RunConfig:
    epsilon: float = 0.1
    delta: float = 0.1
    delta_c: Optional[float] = None
    delta_w: Optional[float] = None
    bins: int = 10
    smoothness_e: float = 0.001
    grid_step: Optional[float] = 1e-7
    grid_stop_factor: float = 1.5
    methods: tuple = ("ps-r",)
    iw: str = "true"
    seed: int = 0
    synthetic: TwoGaussianConfig = field(default_factory=TwoGaussianConfig)

    def __post_init__(self):
        for name in ("epsilon", "delta"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")
        if self.delta_c is None:
            object.__setattr__(self, "delta_c", self.delta / 2)
        if self.delta_w is None:
            object.__setattr__(self, "delta_w", self.delta / 2)
        if not (0 < self.delta_c and 0 < self.delta_w and self.delta_c + self.delta_w < 1):
            raise ValueError("need delta_c, delta_w > 0 and delta_c + delta_w < 1")
        bad = [mth for mth in self.methods if mth not in ALL_METHODS]
        if bad or not self.methods:
            raise ValueError(f"unknown methods {bad}; choose from {ALL_METHODS}")
        if self.iw not in ("true", "estimated"):
            raise ValueError("iw must be 'true' or 'estimated'")
        object.__setattr__(self, "methods", tuple(self.methods))

    @property
    def grid(self) -> Optional[GridSpec]:
        if self.grid_step is None:
            return None
        return GridSpec(step=self.grid_step, stop_factor=self.grid_stop_factor)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["methods"] = list(self.methods)
        return d


@dataclass(frozen=True)
class TrialRecord:
    trial: int
    method: str
    tau_hat: float
    error: float
    true_error: Optional[float]
    mean_size: float
    n_accepted: Optional[int]
    feasible: bool
    violation: bool


@dataclass
class TrialReport:
    config: dict
    records: list

    def __post_init__(self):
        if not self.records:
            raise ValueError("a TrialReport needs at least one trial")

    @property
    def methods(self) -> list:
        seen = []
        for r in self.records:
            if r.method not in seen:
                seen.append(r.method)
        return seen

    @property
    def n_trials(self) -> int:
        return len({r.trial for r in self.records})

    def for_method(self, method: str) -> list:
        return [r for r in self.records if r.method == method]

    def aggregate(self) -> dict:
        out = {}
        for mth in self.methods:
            recs = self.for_method(mth)
            sizes = np.array([r.mean_size for r in recs])
            errs = np.array([r.true_error if r.true_error is not None else r.error for r in recs])
            out[mth] = {
                "trials": len(recs),
                "violation_rate": float(np.mean([r.violation for r in recs])),
                "mean_error": float(errs.mean()),
                "mean_test_error": float(np.mean([r.error for r in recs])),
                "mean_tau_hat": float(np.mean([r.tau_hat for r in recs])),
                "mean_size": float(sizes.mean()),
                "size_quantiles": {str(q): float(np.quantile(sizes, q)) for q in SIZE_QUANTILES},
                "infeasible_rate": float(np.mean([not r.feasible for r in recs])),
            }
        return out

    def violation_rate(self, method: str) -> float:
        return self.aggregate()[method]["violation_rate"]

    def mean_error(self, method: str) -> float:
        return self.aggregate()[method]["mean_error"]

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "method": self.methods,
            "tau_hat": None,
            "bound": None,
            "n_accepted": None,
            "feasible": None,
            "trials": [asdict(r) for r in self.records],
            "aggregate": self.aggregate(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrialReport":
        return cls(d["config"], [TrialRecord(**r) for r in d["trials"]])


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return str(int(x))
    return repr(x) if isinstance(x, float) else str(x)


CSV_FIELDS = (
    "kind", "trial", "method", "tau_hat", "error", "true_error", "mean_size", "n_accepted",
    "feasible", "violation", "violation_rate", "mean_error", "size_q10", "size_q50", "size_q90",
)


def report_to_json(report: TrialReport) -> str:
    return json.dumps(report.to_dict(), indent=2, allow_nan=False) + "\n"


def report_to_csv(report: TrialReport) -> str:
    """One row per (trial, method) record, then one aggregate row per method."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for r in report.records:
        row = ["trial", r.trial, r.method, r.tau_hat, r.error, r.true_error, r.mean_size,
               r.n_accepted, r.feasible, r.violation] + [None] * 5
        w.writerow([_fmt(c) for c in row])
    for mth, agg in report.aggregate().items():
        q = agg["size_quantiles"]
        row = ["aggregate", None, mth, agg["mean_tau_hat"], agg["mean_test_error"], None,
               agg["mean_size"], None, None, None, agg["violation_rate"], agg["mean_error"],
               q["0.1"], q["0.5"], q["0.9"]]
        w.writerow([_fmt(c) for c in row])
    return buf.getvalue()


def emit_report(report: TrialReport, path, fmt: str = "json") -> None:
    if not report.records:
        raise ValueError("empty report")
    if fmt == "json":
        text = report_to_json(report)
    elif fmt == "csv":
        text = report_to_csv(report)
    else:
        raise ValueError(f"unknown format {fmt!r}")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


# --- trials -----------------------------------------------------------------


@dataclass
class _Prepared:
    scores: np.ndarray
    true_iw: np.ndarray
    heuristic: np.ndarray
    uset: Optional[UncertaintySet]
    b_hat: Optional[float]
    point: Optional[np.ndarray]
    b_point: Optional[float]


def _prepare(config: RunConfig, data: ShiftData) -> _Prepared:
    scores = data.source_true_scores
    h_src = heuristic_iw(clip_probs(data.source_domain_prob))
    uset = b_hat = point = b_point = None
    needs_bins = "ps-m" in config.methods or (
        config.iw == "estimated" and ("ps-w" in config.methods or "ps-c" in config.methods)
    )
    if needs_bins:
        h_tgt = heuristic_iw(clip_probs(data.target_domain_prob))
        bins = build_equal_mass_bins(h_src, config.bins)
        est = bin_estimates(bins, h_src, h_tgt, config.smoothness_e, config.delta_w)
        bounds = estimate_iw_bounds(bins, est)
        uset = uncertainty_set(bins, bounds, h_src, config.delta_w)
        b_hat = estimate_b(bounds)
        point = point_iw(bins, est, h_src)
        b_point = float(np.max(est.q_hat[est.p_hat > 0] / est.p_hat[est.p_hat > 0]))
    return _Prepared(scores, data.source_true_iw, h_src, uset, b_hat, point, b_point)


def _calibrate(method: str, config: RunConfig, prep: _Prepared, b_true: float, trial_seed):
    eps, grid = config.epsilon, config.grid
    m = len(prep.scores)
    uniforms = draw_uniforms(m, trial_seed)
    if method == "ps":
        return ps_calibrate(prep.scores, eps, config.delta)
    if method == "ps-c":
        b = b_true if config.iw == "true" else prep.b_hat
        return ps_c_calibrate(prep.scores, eps, config.delta, b)
    if method == "ps-r":
        if config.iw == "true":
            w, b = prep.true_iw, b_true
        else:
            # raw heuristic weights from g, bounded by their observed maximum
            w, b = prep.heuristic, float(prep.heuristic.max())
        return ps_r_calibrate(prep.scores, w, b, eps, config.delta, uniforms=uniforms)
    if method == "ps-m":
        return ps_r_calibrate(
            prep.scores, prep.point, prep.b_point, eps, config.delta, uniforms=uniforms, method="PS-M"
        )
    if method == "ps-w":
        if config.iw == "true":
            W, b = UncertaintySet.degenerate(prep.true_iw, config.delta_w), b_true
            delta_c = config.delta
        else:
            W, b = prep.uset, prep.b_hat
            delta_c = config.delta_c
        return ps_w_calibrate(prep.scores, W, b, eps, delta_c, grid, uniforms=uniforms)
    raise ValueError(method)


def run_trial(config: RunConfig, trial: int, trial_seed, test) -> list:
    syn = config.synthetic
    data = ShiftData(config=syn, **sample_calibration(syn, trial_seed), **test)
    test_x = data.test_x
    prep = _prepare(config, data)
    test_true = data.test_true_scores
    test_labels = data.test_label_scores
    records = []
    for method in config.methods:
        if method == "wsci":
            if config.iw == "true":
                cal_w, test_w = prep.true_iw, syn.true_iw(test_x[:, 0])
            else:
                cal_w = prep.heuristic
                test_w = heuristic_iw(clip_probs(data.test_domain_prob))
            taus = wsci_thresholds(prep.scores, cal_w, test_w, config.epsilon)
            err = float(np.mean(test_true < taus))
            size = float(np.mean(np.count_nonzero(test_labels >= taus[:, None], axis=1)))
            records.append(
                TrialRecord(trial, "wsci", float(np.median(taus)), err, None, size, None, True,
                            err > config.epsilon)
            )
            continue
        res = _calibrate(method, config, prep, syn.b, trial_seed)
        err, size = evaluate(test_true, label_counts_at(test_labels, res.tau_hat), res.tau_hat)
        true_err = syn.target_error(res.tau_hat)
        records.append(
            TrialRecord(trial, method, res.tau_hat, err, true_err, size, res.n_accepted,
                        res.feasible, true_err > config.epsilon)
        )
    return records


def _run_chunk(args):
    config, trials, seeds, test = args
    out = []
    for t, s in zip(trials, seeds):
        out.extend(run_trial(config, t, s, test))
    return out


def mc_validate(config: RunConfig, trials: int, n_jobs: int = 1) -> TrialReport:
    """Repeat calibration on fresh calibration draws; the test set is fixed.

    Trial ``t`` uses the ``t``-th child of the master seed, so results do not
    depend on ``n_jobs``. Violations are judged on the exact target error.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    master = np.random.SeedSequence(config.seed)
    test = sample_test(config.synthetic, master)
    seeds = master.spawn(trials)
    idx = list(range(trials))
    if n_jobs == 1:
        records = _run_chunk((config, idx, seeds, test))
    else:
        chunks = [(config, idx[i::n_jobs], seeds[i::n_jobs], test) for i in range(n_jobs)]
        with ProcessPoolExecutor(max_workers=n_jobs) as ex:
            parts = list(ex.map(_run_chunk, chunks))
        records = [r for part in parts for r in part]
        order = {m: i for i, m in enumerate(config.methods)}
        records.sort(key=lambda r: (r.trial, order[r.method]))
    return TrialReport(config.to_dict(), records)
