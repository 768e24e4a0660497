"""Binary-classification metrics with honest handling of undefined ratios.

A ratio whose denominator is zero (no predicted positives, no actual
negatives, and so on) is reported as absent (None), never silently as
zero; the corresponding report cell stays empty rather than lying. AUC
is the area under the ROC curve by trapezoidal integration with tied
scores grouped, which makes it equal to the probability that a random
positive outranks a random negative, ties counted half.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid

from .errors import DegenerateInputError, ValidationError

CSV_HEADER = (
    "model",
    "accuracy_pct",
    "precision",
    "recall",
    "f1",
    "specificity",
    "auc",
    "training_time_s",
)


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ValidationError(f"confusion counts must be nonnegative, got {self}")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def to_json(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn}


def confusion(predictions, labels) -> ConfusionMatrix:
    """Count the standard 2x2 partition; tp counts (pred=1, label=1)."""
    p = np.asarray(predictions).astype(int)
    t = np.asarray(labels).astype(int)
    if p.ndim != 1 or p.shape != t.shape:
        raise ValidationError(
            f"predictions and labels must be equal-length 1-d, got {p.shape} vs {t.shape}"
        )
    if p.size == 0:
        raise ValidationError("nothing to count")
    bad = set(np.unique(np.concatenate([p, t]))) - {0, 1}
    if bad:
        raise ValidationError(f"entries must be 0/1, found {sorted(bad)}")
    return ConfusionMatrix(
        tp=int(np.sum((p == 1) & (t == 1))),
        fp=int(np.sum((p == 1) & (t == 0))),
        tn=int(np.sum((p == 0) & (t == 0))),
        fn=int(np.sum((p == 0) & (t == 1))),
    )


def _ratio(num: int, den: int) -> float | None:
    return num / den if den > 0 else None


@dataclass(frozen=True)
class MetricsReport:
    """One comparison-table row; absent metrics are None, not zero."""

    model_name: str
    accuracy: float | None = None
    precision: float | None = None
    recall: float | None = None
    f1: float | None = None
    specificity: float | None = None
    auc: float | None = None
    training_time_s: float | None = None

    def as_csv_fields(self) -> list[str]:
        cells = [self.model_name]
        acc_pct = None if self.accuracy is None else self.accuracy * 100.0
        for value in (acc_pct, self.precision, self.recall, self.f1,
                      self.specificity, self.auc, self.training_time_s):
            cells.append("" if value is None else repr(float(value)))
        return cells


def classification_metrics(matrix: ConfusionMatrix, model_name: str = "") -> MetricsReport:
    """Scalar metrics of one confusion matrix; auc and training time unset."""
    if matrix.total <= 0:
        raise ValidationError("empty confusion matrix")
    c = matrix
    p = _ratio(c.tp, c.tp + c.fp)
    r = _ratio(c.tp, c.tp + c.fn)
    if p is None or r is None or p + r == 0.0:
        f1 = None
    else:
        f1 = 2.0 * p * r / (p + r)
    return MetricsReport(
        model_name=model_name,
        accuracy=(c.tp + c.tn) / c.total,
        precision=p,
        recall=r,
        f1=f1,
        specificity=_ratio(c.tn, c.tn + c.fp),
    )


def f1_from_pr(precision: float, recall: float) -> float:
    if precision + recall == 0.0:
        raise DegenerateInputError("precision and recall are both zero")
    return 2.0 * precision * recall / (precision + recall)


def roc_points(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    """ROC curve points (fpr, tpr), one per distinct score, ties grouped.

    Thresholds sweep from strictest to loosest; the curve starts at (0, 0)
    and ends at (1, 1).
    """
    s = np.asarray(scores, dtype=np.float64)
    t = np.asarray(labels).astype(int)
    if s.ndim != 1 or s.shape != t.shape:
        raise ValidationError(f"scores and labels must be equal-length 1-d, got {s.shape} vs {t.shape}")
    n_pos = int(t.sum())
    n_neg = t.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateInputError(
            f"need both classes for a ROC curve, got {n_pos} positive / {n_neg} negative"
        )
    order = np.argsort(-s, kind="stable")
    s_sorted = s[order]
    t_sorted = t[order]
    # Close each group of tied scores before emitting a point.
    distinct = np.nonzero(np.diff(s_sorted))[0]
    cut = np.concatenate([distinct, [t.size - 1]])
    tp_cum = np.cumsum(t_sorted)[cut]
    fp_cum = (cut + 1) - tp_cum
    tpr = np.concatenate([[0.0], tp_cum / n_pos])
    fpr = np.concatenate([[0.0], fp_cum / n_neg])
    return fpr, tpr


def auc(scores, labels) -> float:
    """Area under the ROC curve, trapezoidal rule over the tie-grouped points."""
    fpr, tpr = roc_points(scores, labels)
    return float(trapezoid(tpr, fpr))


@dataclass(frozen=True)
class ConsistencyRow:
    precision: float
    recall: float
    reported_f1: float
    recomputed_f1: float
    deviation: float  # absolute


@dataclass(frozen=True)
class ConsistencyReport:
    rows: tuple[ConsistencyRow, ...]

    @property
    def max_deviation(self) -> float:
        return max(row.deviation for row in self.rows)


def f1_consistency(rows) -> ConsistencyReport:
    """Recompute F1 from each (precision, recall, reported_f1) row.

    Reports the absolute deviation between the reported figure and the
    harmonic mean the row implies; used to audit published result tables.
    """
    rows = list(rows)
    if not rows:
        raise DegenerateInputError("no rows to check")
    out = []
    for p, r, reported in rows:
        recomputed = f1_from_pr(p, r)
        out.append(ConsistencyRow(p, r, reported, recomputed, abs(recomputed - reported)))
    return ConsistencyReport(tuple(out))


def write_model_table(path, reports: list[MetricsReport]) -> None:
    """CSV with the fixed comparison header; absent metrics become empty cells."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for report in reports:
            writer.writerow(report.as_csv_fields())


def read_model_table(path) -> list[MetricsReport]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != CSV_HEADER:
            raise ValidationError(f"unexpected table header {header}")
        out = []
        for rec in reader:
            vals = [None if cell == "" else float(cell) for cell in rec[1:]]
            acc = None if vals[0] is None else vals[0] / 100.0
            out.append(MetricsReport(rec[0], acc, *vals[1:]))
    return out


def write_confusion_panel(path, panels: dict[str, ConfusionMatrix]) -> None:
    """JSON file of per-model confusion matrices (the report's matrix panel)."""
    doc = {name: m.to_json() for name, m in sorted(panels.items())}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
