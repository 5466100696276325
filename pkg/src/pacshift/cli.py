"""Command-line interface.

Exit codes: 0 success, 2 infeasible calibration (trivial threshold 0),
3 unbounded importance-weight bound, 4 input error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .estimators import BinnedImportanceWeights
from .fileio import (
    InputError,
    ingest_scores,
    read_domain_probs,
    read_test_compact,
    read_test_long,
    write_csv,
)
from .harness import ALL_METHODS, RunConfig, emit_report, mc_validate, report_to_csv, report_to_json
from .iw_estimation import DegenerateBinsError, EmptySourceBinError, clip_probs, heuristic_iw
from .predset import GridSpec, evaluate, ps_c_calibrate, ps_calibrate
from .rejection import ps_r_calibrate
from .robust import UnboundedWeightError, UncertaintySet, ps_w_calibrate
from .synthetic import TwoGaussianConfig, synth_two_gaussian
from .wsci import wsci_calibrate

EXIT_OK, EXIT_INFEASIBLE, EXIT_UNBOUNDED, EXIT_INPUT = 0, 2, 3, 4

log = logging.getLogger("pacshift")


def _probability(text):
    x = float(text)
    if not 0 < x < 1:
        raise argparse.ArgumentTypeError(f"{text} is not in (0, 1)")
    return x


def _common(p):
    p.add_argument("--epsilon", type=_probability, default=0.1)
    p.add_argument("--delta", type=_probability, default=0.1)
    p.add_argument("--delta-c", type=_probability, default=None, help="default: delta/2")
    p.add_argument("--delta-w", type=_probability, default=None, help="default: delta/2")
    p.add_argument("--bins", type=int, default=10)
    p.add_argument("--smoothness-e", type=float, default=0.001)
    p.add_argument("--grid-step", type=float, default=1e-7)
    p.add_argument("--grid-stop-factor", type=float, default=1.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=None, help="output file (default: stdout)")
    p.add_argument("--format", choices=("json", "csv"), default="json")


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with the input-error code; 2 is reserved for infeasible calibrations."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pacshift", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", help="choose a threshold from a calibration file")
    p.add_argument("--cal", type=Path, required=True, help="calibration CSV")
    p.add_argument("--method", choices=ALL_METHODS, default="ps-w")
    p.add_argument("--target", type=Path, help="unlabeled target CSV (example_id,domain_prob)")
    p.add_argument("--iw-model", type=Path, help="JSON written by estimate-iw")
    p.add_argument("--b", type=float, default=None, help="importance-weight bound")
    p.add_argument("--test-weight", type=float, default=1.0, help="wsci: test point weight")
    p.add_argument("--break-mode", choices=("break", "scan"), default="break")
    p.add_argument("--trace", action="store_true", help="include the bound trace")
    _common(p)

    p = sub.add_parser("evaluate", help="error and size of a threshold on test data")
    p.add_argument("--tau", type=float, required=True)
    p.add_argument("--test", type=Path, help="compact CSV example_id,true_score,n_labels_ge_tau")
    p.add_argument("--scores", type=Path, help="long CSV example_id,label_id,score")
    p.add_argument("--truth", type=Path, help="CSV example_id,true_label_id")
    p.add_argument("--out", type=Path, default=None)

    p = sub.add_parser("estimate-iw", help="binned importance-weight intervals")
    p.add_argument("--cal", type=Path, required=True, help="calibration CSV with domain_prob")
    p.add_argument("--target", type=Path, required=True)
    p.add_argument("--per-example", type=Path, help="write calibration CSV with iw_lower,iw_upper")
    _common(p)

    p = sub.add_parser("synth", help="write a two-Gaussian shift to CSV files")
    _synth_args(p)
    p.add_argument("--out-dir", type=Path, required=True)

    p = sub.add_parser("mc-validate", help="Monte Carlo check of the PAC guarantee")
    p.add_argument("--method", dest="methods", action="append", choices=ALL_METHODS)
    p.add_argument("--trials", type=int, default=500)
    p.add_argument("--iw", choices=("true", "estimated"), default="true")
    p.add_argument("--n-jobs", type=int, default=1)
    p.add_argument("--exact-grid", action="store_true", help="scan scores instead of a grid")
    _synth_args(p, seed=False)
    _common(p)
    return parser


def _synth_args(p, seed=True):
    p.add_argument("--dim", type=int, default=8)
    p.add_argument("--m", type=int, default=2000)
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--test-size", type=int, default=10000)
    p.add_argument("--domain-noise", type=float, default=0.0)
    if seed:
        p.add_argument("--seed", type=int, default=0)


def _emit(obj, out, fmt="json"):
    if fmt == "json":
        text = json.dumps(obj, indent=2) + "\n"
    else:
        # scalar result fields only; nested config/trace/report parts stay JSON-only
        keys = [k for k, v in obj.items()
                if not isinstance(v, (dict, list)) and k not in ("trials", "aggregate")]
        text = ",".join(keys) + "\n" + ",".join(
            "" if obj[k] is None else (repr(obj[k]) if isinstance(obj[k], float) else str(obj[k]))
            for k in keys
        ) + "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def _deltas(args):
    dc = args.delta / 2 if args.delta_c is None else args.delta_c
    dw = args.delta / 2 if args.delta_w is None else args.delta_w
    if dc + dw >= 1:
        raise InputError("delta_c + delta_w must be < 1")
    return dc, dw


def _iw_model(args, data):
    if args.iw_model is not None:
        return BinnedImportanceWeights.from_dict(json.loads(args.iw_model.read_text()))
    if args.target is None:
        raise InputError("this method needs --target or --iw-model to estimate importance weights")
    if data.domain_prob is None:
        raise InputError(f"{args.cal}: a domain_prob column is required to estimate importance weights")
    _, dw = _deltas(args)
    model = BinnedImportanceWeights(args.bins, args.smoothness_e, dw)
    return model.fit(data.domain_prob, read_domain_probs(args.target))


def cmd_calibrate(args) -> int:
    data = ingest_scores(args.cal)
    scores = data.scores
    grid = GridSpec(args.grid_step, args.grid_stop_factor) if args.grid_step else None
    method = args.method
    dc, dw = _deltas(args)
    config = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items() if k != "func"}

    if method == "wsci":
        if data.true_iw is not None:
            w = data.true_iw
        elif data.domain_prob is not None:
            w = heuristic_iw(clip_probs(data.domain_prob))
        else:
            w = np.ones(scores.m)
        tau = wsci_calibrate(scores.true_scores, w, args.test_weight, args.epsilon)
        _emit(
            {"config": config, "method": method, "tau_hat": tau, "bound": None, "n_accepted": None,
             "feasible": True, "trials": [], "aggregate": None},
            args.out, args.format,
        )
        return EXIT_OK

    if method == "ps":
        res = ps_calibrate(scores, args.epsilon, args.delta, grid, keep_trace=args.trace)
    elif method == "ps-c":
        b = args.b if args.b is not None else _iw_model(args, data).b_
        res = ps_c_calibrate(scores, args.epsilon, args.delta, b, grid)
    elif method == "ps-r":
        if data.true_iw is not None:
            w = data.true_iw
        elif data.domain_prob is not None:
            w = heuristic_iw(clip_probs(data.domain_prob))
        else:
            raise InputError(f"{args.cal}: ps-r needs a true_iw or domain_prob column")
        b = args.b if args.b is not None else float(np.max(w))
        res = ps_r_calibrate(scores, w, b, args.epsilon, args.delta, args.seed, grid=grid,
                             keep_trace=args.trace)
    elif method == "ps-m":
        model = _iw_model(args, data)
        w = model.point_weights(data.domain_prob)
        est = model.estimates_
        b = args.b if args.b is not None else float(np.max(est.q_hat[est.p_hat > 0] / est.p_hat[est.p_hat > 0]))
        res = ps_r_calibrate(scores, w, b, args.epsilon, args.delta, args.seed, grid=grid,
                             method="PS-M", keep_trace=args.trace)
    else:  # ps-w
        if data.iw_lower is not None:
            W = UncertaintySet(data.iw_lower, data.iw_upper, dw)
            b = args.b if args.b is not None else float(np.max(data.iw_upper))
        else:
            model = _iw_model(args, data)
            W = model.uncertainty_set(data.domain_prob)
            b = args.b if args.b is not None else model.b_
        res = ps_w_calibrate(scores, W, b, args.epsilon, dc, grid, args.seed,
                             break_on_violation=args.break_mode == "break", keep_trace=args.trace)

    out = {
        "config": config,
        "method": method,
        "tau_hat": res.tau_hat,
        "bound": res.bound_at_tau,
        "n_accepted": res.n_accepted,
        "feasible": res.feasible,
        "trials": [],
        "aggregate": None,
    }
    if args.trace:
        out["trace"] = res.to_dict().get("trace", [])
    _emit(out, args.out, args.format)
    if not res.feasible:
        log.warning("no feasible threshold; returning the trivial solution tau=0")
        return EXIT_INFEASIBLE
    return EXIT_OK


def cmd_evaluate(args) -> int:
    if args.test is not None:
        true_scores, counts = read_test_compact(args.test)
    elif args.scores is not None and args.truth is not None:
        _, true_scores, label_scores = read_test_long(args.scores, args.truth)
        counts = np.array([np.count_nonzero(s >= args.tau) for s in label_scores])
    else:
        raise InputError("give --test, or both --scores and --truth")
    err, size = evaluate(true_scores, counts, args.tau)
    _emit({"tau": args.tau, "n": int(len(true_scores)), "error": err, "mean_size": size}, args.out)
    return EXIT_OK


def cmd_estimate_iw(args) -> int:
    data = ingest_scores(args.cal)
    if data.domain_prob is None:
        raise InputError(f"{args.cal}: domain_prob column required")
    _, dw = _deltas(args)
    model = BinnedImportanceWeights(args.bins, args.smoothness_e, dw)
    model.fit(data.domain_prob, read_domain_probs(args.target))
    payload = model.to_dict()
    _emit(payload, args.out)
    if args.per_example is not None:
        lu = model.transform(data.domain_prob)
        write_csv(
            args.per_example,
            ["example_id", "true_score", "iw_lower", "iw_upper"],
            [(eid, float(s), float(lo), float(hi))
             for eid, s, (lo, hi) in zip(data.example_ids, data.scores.true_scores, lu)],
        )
    if payload["b_hat"] is None:
        model.b_  # raises UnboundedWeightError with the offending bin
    return EXIT_OK


def _synth_config(args, seed) -> TwoGaussianConfig:
    return TwoGaussianConfig(
        d=args.dim, m=args.m, n=args.n, test_size=args.test_size, seed=seed,
        domain_noise=args.domain_noise,
    )


def cmd_synth(args) -> int:
    cfg = _synth_config(args, args.seed)
    data = synth_two_gaussian(cfg)
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    write_csv(
        out / "calibration.csv",
        ["example_id", "true_score", "domain_prob", "true_iw"],
        [(f"s{i}", float(s), float(g), float(w)) for i, (s, g, w) in
         enumerate(zip(data.source_true_scores, data.source_domain_prob, data.source_true_iw))],
    )
    write_csv(out / "target.csv", ["example_id", "domain_prob"],
              [(f"t{i}", float(g)) for i, g in enumerate(data.target_domain_prob)])
    write_csv(
        out / "test_scores.csv",
        ["example_id", "label_id", "score"],
        [(f"x{i}", lab, float(row[lab])) for i, row in enumerate(data.test_label_scores) for lab in (0, 1)],
    )
    write_csv(out / "test_truth.csv", ["example_id", "true_label_id"],
              [(f"x{i}", int(y)) for i, y in enumerate(data.test_y)])
    (out / "config.json").write_text(json.dumps({**cfg.to_dict(), "b": cfg.b}, indent=2) + "\n")
    return EXIT_OK


def cmd_mc_validate(args) -> int:
    dc, dw = _deltas(args)
    config = RunConfig(
        epsilon=args.epsilon,
        delta=args.delta,
        delta_c=dc,
        delta_w=dw,
        bins=args.bins,
        smoothness_e=args.smoothness_e,
        grid_step=None if args.exact_grid else args.grid_step,
        grid_stop_factor=args.grid_stop_factor,
        methods=tuple(args.methods or ("ps-r",)),
        iw=args.iw,
        seed=args.seed,
        synthetic=_synth_config(args, args.seed),
    )
    report = mc_validate(config, args.trials, n_jobs=args.n_jobs)
    if args.out is None:
        sys.stdout.write(report_to_json(report) if args.format == "json" else report_to_csv(report))
    else:
        emit_report(report, args.out, args.format)
    return EXIT_OK


COMMANDS = {
    "calibrate": cmd_calibrate,
    "evaluate": cmd_evaluate,
    "estimate-iw": cmd_estimate_iw,
    "synth": cmd_synth,
    "mc-validate": cmd_mc_validate,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UnboundedWeightError as exc:
        log.error("%s", exc)
        return EXIT_UNBOUNDED
    except (InputError, DegenerateBinsError, EmptySourceBinError, OSError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
