"""Confusion matrices and accuracy / sensitivity / specificity.

    accuracy    = (TP + TN) / (TP + FP + TN + FN)
    sensitivity = TP / (TP + FN)        (true positive rate, recall)
    specificity = TN / (TN + FP)        (true negative rate)

Two reporting modes are supported for a K-class confusion matrix:
``binarized`` collapses the classes into a positive/negative partition
(e.g. nodule vs. normal) and applies the binary formulas once;
``macro_ovr`` applies them one-vs-rest per class and macro-averages.

Counting is exact integer arithmetic until the final division. A metric
with a zero denominator is *undefined* and reported as ``None`` (JSON
null), never as 0 or 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidLabel, InvalidPartition, InvalidShape


@dataclass
class ConfusionMatrix:
    """K x K count matrix: counts[true_class][predicted_class]."""

    k: int
    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass
class BinaryCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass
class MetricReport:
    """Metrics for one reporting mode; None marks an undefined value."""

    mode: str
    accuracy: float | None
    sensitivity: float | None
    specificity: float | None
    per_class: list[dict] | None = None


def confusion(true_labels, pred_labels, k: int) -> ConfusionMatrix:
    """Tally (true, predicted) pairs into a K x K matrix."""
    true_labels = np.asarray(true_labels, dtype=np.int64)
    pred_labels = np.asarray(pred_labels, dtype=np.int64)
    if true_labels.shape != pred_labels.shape or true_labels.ndim != 1:
        raise InvalidShape("label vectors must be 1-D and equal length")
    if k < 1:
        raise InvalidLabel(f"class count must be >= 1, got {k}")
    for name, labels in (("true", true_labels), ("predicted", pred_labels)):
        if labels.size and (labels.min() < 0 or labels.max() >= k):
            raise InvalidLabel(f"{name} labels must lie in [0, {k})")
    counts = np.zeros((k, k), dtype=np.int64)
    np.add.at(counts, (true_labels, pred_labels), 1)
    return ConfusionMatrix(k, counts)


def binarize(cm: ConfusionMatrix, positive_classes) -> BinaryCounts:
    """Collapse a K-class matrix into TP/FP/TN/FN under a class partition.

    ``positive_classes`` must be a non-empty proper subset of the classes;
    the total count is conserved.
    """
    pos = sorted(set(int(c) for c in positive_classes))
    if any(c < 0 or c >= cm.k for c in pos):
        raise InvalidLabel(f"positive classes must lie in [0, {cm.k})")
    if len(pos) == 0 or len(pos) == cm.k:
        raise InvalidPartition(
            "positive classes must be a non-empty proper subset"
        )
    mask = np.zeros(cm.k, dtype=bool)
    mask[pos] = True
    c = cm.counts
    tp = int(c[np.ix_(mask, mask)].sum())
    fn = int(c[np.ix_(mask, ~mask)].sum())
    fp = int(c[np.ix_(~mask, mask)].sum())
    tn = int(c[np.ix_(~mask, ~mask)].sum())
    return BinaryCounts(tp=tp, fp=fp, tn=tn, fn=fn)


def accuracy(bc: BinaryCounts) -> float | None:
    """(TP + TN) / total; None on an empty tally."""
    if bc.total == 0:
        return None
    return (bc.tp + bc.tn) / bc.total


def sensitivity(bc: BinaryCounts) -> float | None:
    """TP / (TP + FN); None when there are no actual positives."""
    if bc.tp + bc.fn == 0:
        return None
    return bc.tp / (bc.tp + bc.fn)


def specificity(bc: BinaryCounts) -> float | None:
    """TN / (TN + FP); None when there are no actual negatives."""
    if bc.tn + bc.fp == 0:
        return None
    return bc.tn / (bc.tn + bc.fp)


def binarized_report(cm: ConfusionMatrix, positive_classes) -> MetricReport:
    bc = binarize(cm, positive_classes)
    return MetricReport(
        mode="binarized_nodule",
        accuracy=accuracy(bc),
        sensitivity=sensitivity(bc),
        specificity=specificity(bc),
        per_class=None,
    )


def macro_report(cm: ConfusionMatrix) -> MetricReport:
    """One-vs-rest sensitivity/specificity per class, macro-averaged.

    The macro average is the unweighted mean over classes where the metric
    is defined; overall accuracy is trace / total.
    """
    if cm.k < 2:
        raise InvalidPartition("macro report needs at least 2 classes")
    total = cm.total
    per_class = []
    for c in range(cm.k):
        bc = binarize(cm, [c])
        per_class.append({
            "class_index": c,
            "tp": bc.tp, "fp": bc.fp, "tn": bc.tn, "fn": bc.fn,
            "sensitivity": sensitivity(bc),
            "specificity": specificity(bc),
        })
    sens = [row["sensitivity"] for row in per_class if row["sensitivity"] is not None]
    spec = [row["specificity"] for row in per_class if row["specificity"] is not None]
    return MetricReport(
        mode="macro_ovr",
        accuracy=None if total == 0 else int(np.trace(cm.counts)) / total,
        sensitivity=sum(sens) / len(sens) if sens else None,
        specificity=sum(spec) / len(spec) if spec else None,
        per_class=per_class,
    )


def default_positive_classes(class_names: list[str]) -> list[int]:
    """Positive classes for the binarized report.

    Classes whose name contains "normal" form the negative side; when no
    such class exists, the last class plays the negative role.
    """
    negatives = [i for i, n in enumerate(class_names) if "normal" in n.lower()]
    if not negatives or len(negatives) == len(class_names):
        negatives = [len(class_names) - 1]
    return [i for i in range(len(class_names)) if i not in negatives]


def report_json(report: MetricReport, cm: ConfusionMatrix) -> dict:
    """JSON-ready form of a report: metrics, confusion counts, per-class rows."""
    return {
        "mode": report.mode,
        "accuracy": report.accuracy,
        "sensitivity": report.sensitivity,
        "specificity": report.specificity,
        "confusion": cm.counts.tolist(),
        "per_class": report.per_class,
    }
