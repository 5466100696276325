"""CSV ingestion for calibration, target, and test files."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .predset import ScoreSet


class InputError(ValueError):
    """Malformed or incomplete input file."""


@dataclass
class CalibrationData:
    example_ids: list
    scores: ScoreSet
    domain_prob: Optional[np.ndarray] = None
    true_iw: Optional[np.ndarray] = None
    iw_lower: Optional[np.ndarray] = None
    iw_upper: Optional[np.ndarray] = None


def _read_rows(path, required, optional=()):
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise InputError(f"{path}: empty file") from None
        missing = [c for c in required if c not in header]
        if missing:
            raise InputError(f"{path}: missing required column(s) {', '.join(missing)}")
        cols = {c: header.index(c) for c in (*required, *optional) if c in header}
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise InputError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            rows.append((lineno, {c: row[i].strip() for c, i in cols.items()}))
    if not rows:
        raise InputError(f"{path}: no data rows")
    return rows, cols


def _float(path, lineno, name, text, allow_inf=False):
    try:
        x = float(text)
    except ValueError:
        raise InputError(f"{path}:{lineno}: column {name!r}: cannot parse {text!r} as a number") from None
    if math.isnan(x) or (math.isinf(x) and not allow_inf):
        raise InputError(f"{path}:{lineno}: column {name!r}: non-finite value {text!r}")
    return x


def ingest_scores(path) -> CalibrationData:
    """Read ``example_id,true_score[,domain_prob][,true_iw][,iw_lower,iw_upper]``."""
    optional = ("domain_prob", "true_iw", "iw_lower", "iw_upper")
    rows, cols = _read_rows(path, ("example_id", "true_score"), optional)
    if ("iw_lower" in cols) != ("iw_upper" in cols):
        raise InputError(f"{path}: iw_lower and iw_upper must appear together")
    ids, values = [], {c: [] for c in ("true_score", *optional) if c in cols}
    for lineno, row in rows:
        ids.append(row["example_id"])
        for c in values:
            x = _float(path, lineno, c, row[c], allow_inf=(c == "iw_upper"))
            if c == "true_score" and x < 0:
                raise InputError(f"{path}:{lineno}: negative true_score {x}")
            if c == "domain_prob" and not 0 <= x <= 1:
                raise InputError(f"{path}:{lineno}: domain_prob {x} outside [0, 1]")
            if c in ("true_iw", "iw_lower", "iw_upper") and x < 0:
                raise InputError(f"{path}:{lineno}: negative importance weight {x}")
            values[c].append(x)
    arr = {c: np.array(v) for c, v in values.items()}
    if "iw_lower" in arr and np.any(arr["iw_lower"] > arr["iw_upper"]):
        i = int(np.argmax(arr["iw_lower"] > arr["iw_upper"]))
        raise InputError(f"{path}:{rows[i][0]}: iw_lower exceeds iw_upper")
    return CalibrationData(
        example_ids=ids,
        scores=ScoreSet(arr["true_score"]),
        domain_prob=arr.get("domain_prob"),
        true_iw=arr.get("true_iw"),
        iw_lower=arr.get("iw_lower"),
        iw_upper=arr.get("iw_upper"),
    )


def read_domain_probs(path) -> np.ndarray:
    """Unlabeled target file: ``example_id,domain_prob``."""
    rows, _ = _read_rows(path, ("example_id", "domain_prob"))
    out = []
    for lineno, row in rows:
        x = _float(path, lineno, "domain_prob", row["domain_prob"])
        if not 0 <= x <= 1:
            raise InputError(f"{path}:{lineno}: domain_prob {x} outside [0, 1]")
        out.append(x)
    return np.array(out)


def read_test_compact(path):
    """``example_id,true_score,n_labels_ge_tau``; sizes precomputed for one threshold."""
    rows, _ = _read_rows(path, ("example_id", "true_score", "n_labels_ge_tau"))
    scores, counts = [], []
    for lineno, row in rows:
        scores.append(_float(path, lineno, "true_score", row["true_score"]))
        c = _float(path, lineno, "n_labels_ge_tau", row["n_labels_ge_tau"])
        if c < 0 or c != int(c):
            raise InputError(f"{path}:{lineno}: n_labels_ge_tau must be a nonnegative integer")
        counts.append(int(c))
    return np.array(scores), np.array(counts)


def read_test_long(scores_path, truth_path):
    """Long-format label scores plus a truth file.

    Returns ``(example_ids, true_scores, label_scores)`` where ``label_scores``
    is a list of per-example score arrays (label sets may differ in size).
    """
    rows, _ = _read_rows(scores_path, ("example_id", "label_id", "score"))
    per_example: dict = {}
    for lineno, row in rows:
        s = _float(scores_path, lineno, "score", row["score"])
        per_example.setdefault(row["example_id"], {})[row["label_id"]] = s
    truth_rows, _ = _read_rows(truth_path, ("example_id", "true_label_id"))
    ids, true_scores, label_scores = [], [], []
    for lineno, row in truth_rows:
        eid, lab = row["example_id"], row["true_label_id"]
        labels = per_example.get(eid)
        if labels is None or lab not in labels:
            raise InputError(f"{truth_path}:{lineno}: no score for example {eid!r} label {lab!r}")
        ids.append(eid)
        true_scores.append(labels[lab])
        label_scores.append(np.array(list(labels.values())))
    return ids, np.array(true_scores), label_scores


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(c) if isinstance(c, float) else c for c in row])
