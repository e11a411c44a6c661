"""Confusion matrices, macro F1 and LODO report tables.

Macro F1 edge cases: a class enters the mean if it has true or predicted
support; per-class F1 is ``2TP / (2TP + FP + FN)``, which is 0 for a class
that is present but never correctly predicted (or predicted but absent).
Classes with neither true nor predicted support are left out of the mean.
"""

from __future__ import annotations

import csv
import io
from collections import defaultdict
from typing import Iterable, Sequence

import numpy as np

from .errors import ValidationError


def confusion_matrix(y_true, y_pred, n_classes: int) -> np.ndarray:
    """Rows are true classes, columns predicted classes."""
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (y_true, y_pred), 1)
    return cm


def per_class_f1(cm: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-class F1 and a mask of classes that count towards the macro mean."""
    cm = np.asarray(cm)
    tp = np.diag(cm).astype(np.float64)
    fp = cm.sum(axis=0) - tp
    fn = cm.sum(axis=1) - tp
    denom = 2 * tp + fp + fn
    included = denom > 0
    f1 = np.divide(2 * tp, denom, out=np.zeros_like(tp), where=included)
    return f1, included


def macro_f1(cm: np.ndarray) -> float:
    cm = np.asarray(cm)
    if cm.size == 0 or cm.sum() == 0:
        raise ValidationError("confusion matrix", "at least one evaluated window")
    f1, included = per_class_f1(cm)
    return float(f1[included].mean())


def accuracy(cm: np.ndarray) -> float:
    cm = np.asarray(cm)
    if cm.sum() == 0:
        raise ValidationError("confusion matrix", "at least one evaluated window")
    return float(np.trace(cm) / cm.sum())


# -- aggregation -------------------------------------------------------------

RESULT_FIELDS = ("fold", "target_dataset", "strategy", "ratio", "seed", "macro_f1",
                 "accuracy", "best_epoch", "epochs_run", "wall_time_s")
STRATEGY_ORDER = ("Rd", "PF", "PU")


def strategy_rank(name: str) -> int:
    return STRATEGY_ORDER.index(name) if name in STRATEGY_ORDER else len(STRATEGY_ORDER)


def _get(row, key):
    return row[key] if isinstance(row, dict) else getattr(row, key)


def aggregate(results: Iterable, metric: str = "macro_f1") -> dict:
    """Mean ``metric`` per (target, strategy, ratio) over seeds, plus the AVG row.

    Returns ``{"targets": [...], "columns": [(strategy, ratio), ...],
    "cells": {(target, strategy, ratio): value}, "avg": {(strategy, ratio): value}}``.
    The AVG entry is the unweighted mean over targets of the per-target means.
    """
    buckets = defaultdict(list)
    for r in results:
        key = (str(_get(r, "target_dataset")), str(_get(r, "strategy")), float(_get(r, "ratio")))
        buckets[key].append(float(_get(r, metric)))
    cells = {k: float(np.mean(sorted(v))) for k, v in buckets.items()}
    targets = sorted({k[0] for k in cells})
    columns = sorted({(k[1], k[2]) for k in cells}, key=lambda c: (strategy_rank(c[0]), c[0], c[1]))
    avg = {}
    for col in columns:
        vals = [cells[(t, *col)] for t in targets if (t, *col) in cells]
        avg[col] = float(np.mean(sorted(vals)))
    return {"targets": targets, "columns": columns, "cells": cells, "avg": avg}


def _ratio_label(ratio: float) -> str:
    return "All" if ratio == 1 else f"{ratio * 100:g}%"


def report_csv(table: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["target"] + [f"{s}@{r:g}" for s, r in table["columns"]])
    for t in table["targets"]:
        w.writerow([t] + [_fmt(table["cells"].get((t, *c))) for c in table["columns"]])
    w.writerow(["AVG"] + [_fmt(table["avg"].get(c)) for c in table["columns"]])
    return buf.getvalue()


def _fmt(v) -> str:
    return "" if v is None else f"{v:.4f}"


def report_text(table: dict, metric: str = "macro F1") -> str:
    """Aligned text table: one row per target plus AVG, columns grouped by strategy."""
    cols = table["columns"]
    head1 = ["Target"] + [s for s, _ in cols]
    head2 = [""] + [_ratio_label(r) for _, r in cols]
    rows = [[t] + [_fmt(table["cells"].get((t, *c))) for c in cols] for t in table["targets"]]
    rows.append(["AVG"] + [_fmt(table["avg"].get(c)) for c in cols])
    widths = [max(len(str(x)) for x in col) for col in zip(head1, head2, *rows)]
    line = lambda cells: "  ".join(str(c).rjust(w) for c, w in zip(cells, widths))  # noqa: E731
    sep = "-" * (sum(widths) + 2 * (len(widths) - 1))
    out = [f"{metric} (mean over seeds)", sep, line(head1), line(head2), sep]
    out += [line(r) for r in rows[:-1]] + [sep, line(rows[-1]), sep]
    return "\n".join(out) + "\n"


def write_results_csv(results: Sequence, path_or_buf) -> None:
    """Results rows in the fixed column order; caller controls row order."""
    own = isinstance(path_or_buf, (str, bytes)) or hasattr(path_or_buf, "__fspath__")
    fh = open(path_or_buf, "w", newline="", encoding="utf-8") if own else path_or_buf
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULT_FIELDS)
        for r in results:
            w.writerow([_csv_value(k, _get(r, k)) for k in RESULT_FIELDS])
    finally:
        if own:
            fh.close()


def _csv_value(key, value):
    if key in ("macro_f1", "accuracy"):
        return f"{float(value):.6f}"
    if key == "wall_time_s":
        return f"{float(value):.3f}"
    if key == "ratio":
        return f"{float(value):g}"
    return value


def read_results_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        for k in ("fold", "seed", "best_epoch", "epochs_run"):
            r[k] = int(r[k])
        for k in ("ratio", "macro_f1", "accuracy", "wall_time_s"):
            r[k] = float(r[k])
    return rows


def sort_results(rows: list) -> list:
    return sorted(rows, key=lambda r: (int(_get(r, "fold")), strategy_rank(_get(r, "strategy")),
                                       float(_get(r, "ratio")), int(_get(r, "seed"))))
