"""Classification metrics for robustness reports.

Accuracy over non-benign rows is the headline attack metric: the
perturbation engine only touches malicious samples, so overall
accuracy would stay high on imbalanced data even under full evasion.
Rates whose denominator is zero are reported as ``None`` rather than
coerced to a number; inside the macro-averaged F1 the conventional
zero stands in for undefined per-class terms.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DataError


@dataclass(frozen=True)
class ConfusionMatrix:
    """counts[i][j] = rows of true class i predicted as class j."""

    classes: tuple[str, ...]
    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        k = len(self.classes)
        if counts.shape != (k, k):
            raise DataError(f"confusion matrix must be {k}x{k}")
        if np.any(counts < 0):
            raise DataError("confusion counts must be non-negative")
        object.__setattr__(self, "counts", counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def index(self, label: str) -> int:
        try:
            return self.classes.index(label)
        except ValueError:
            raise DataError(f"label {label!r} not in class list") from None

    def to_json(self) -> dict:
        return {"classes": list(self.classes), "counts": self.counts.tolist()}


def confusion(
    truths: Sequence[str], predictions: Sequence[str], classes: Sequence[str]
) -> ConfusionMatrix:
    """Exact confusion counts; labels outside ``classes`` are an error."""
    if len(truths) != len(predictions):
        raise DataError("truth and prediction sequences differ in length")
    classes = tuple(classes)
    index = {c: i for i, c in enumerate(classes)}
    counts = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for t, p in zip(truths, predictions):
        if t not in index:
            raise DataError(f"true label {t!r} not in class list")
        if p not in index:
            raise DataError(f"predicted label {p!r} not in class list")
        counts[index[t], index[p]] += 1
    return ConfusionMatrix(classes, counts)


def overall_accuracy(cm: ConfusionMatrix) -> float | None:
    if cm.total == 0:
        return None
    return float(np.trace(cm.counts)) / cm.total


def accuracy_malicious_only(cm: ConfusionMatrix, benign_label: str) -> float | None:
    """Correct non-benign rows over all non-benign rows (attack accuracy)."""
    b = cm.index(benign_label)
    mask = np.ones(len(cm.classes), dtype=bool)
    mask[b] = False
    total = int(cm.counts[mask].sum())
    if total == 0:
        return None
    correct = int(np.diag(cm.counts)[mask].sum())
    return correct / total


def precision(cm: ConfusionMatrix, label: str) -> float | None:
    i = cm.index(label)
    predicted = int(cm.counts[:, i].sum())
    if predicted == 0:
        return None
    return int(cm.counts[i, i]) / predicted


def recall(cm: ConfusionMatrix, label: str) -> float | None:
    i = cm.index(label)
    actual = int(cm.counts[i, :].sum())
    if actual == 0:
        return None
    return int(cm.counts[i, i]) / actual


def f1_score(cm: ConfusionMatrix, label: str) -> float | None:
    p = precision(cm, label)
    r = recall(cm, label)
    if p is None and r is None:
        return None
    p = p or 0.0
    r = r or 0.0
    if p + r == 0.0:
        return 0.0
    return 2.0 * p * r / (p + r)


def macro_f1(cm: ConfusionMatrix) -> float:
    """Unweighted mean of per-class F1 over classes present in ground truth."""
    present = [c for i, c in enumerate(cm.classes) if cm.counts[i, :].sum() > 0]
    if not present:
        raise DataError("macro-F1 needs at least one class present in ground truth")
    scores = []
    for c in present:
        f1 = f1_score(cm, c)
        scores.append(0.0 if f1 is None else f1)
    return float(np.mean(scores))


def false_positive_rate(cm: ConfusionMatrix, benign_label: str) -> float | None:
    """Benign rows predicted as any attack class, over all benign rows."""
    b = cm.index(benign_label)
    benign_total = int(cm.counts[b, :].sum())
    if benign_total == 0:
        return None
    return (benign_total - int(cm.counts[b, b])) / benign_total


@dataclass(frozen=True)
class MetricsReport:
    confusion: ConfusionMatrix
    benign_label: str
    overall_accuracy: float | None
    malicious_accuracy: float | None
    macro_f1: float
    false_positive_rate: float | None
    per_class: dict

    def to_json(self) -> dict:
        return {
            "benign_label": self.benign_label,
            "overall_accuracy": self.overall_accuracy,
            "malicious_accuracy": self.malicious_accuracy,
            "macro_f1": self.macro_f1,
            "false_positive_rate": self.false_positive_rate,
            "per_class": self.per_class,
            "confusion": self.confusion.to_json(),
        }

    def to_text(self) -> str:
        def fmt(v):
            return "  n/a" if v is None else f"{v:.4f}"

        lines = [
            f"overall accuracy   {fmt(self.overall_accuracy)}",
            f"malicious accuracy {fmt(self.malicious_accuracy)}",
            f"macro F1           {fmt(self.macro_f1)}",
            f"false positive rate{fmt(self.false_positive_rate):>7}",
            "",
            f"{'class':<16}{'precision':>10}{'recall':>10}{'f1':>10}",
        ]
        for c in self.confusion.classes:
            pc = self.per_class[c]
            lines.append(
                f"{c:<16}{fmt(pc['precision']):>10}{fmt(pc['recall']):>10}{fmt(pc['f1']):>10}"
            )
        return "\n".join(lines) + "\n"


def build_report(
    truths: Sequence[str],
    predictions: Sequence[str],
    classes: Sequence[str],
    benign_label: str,
) -> MetricsReport:
    cm = confusion(truths, predictions, classes)
    per_class = {
        c: {"precision": precision(cm, c), "recall": recall(cm, c), "f1": f1_score(cm, c)}
        for c in cm.classes
    }
    return MetricsReport(
        confusion=cm,
        benign_label=benign_label,
        overall_accuracy=overall_accuracy(cm),
        malicious_accuracy=accuracy_malicious_only(cm, benign_label),
        macro_f1=macro_f1(cm),
        false_positive_rate=false_positive_rate(cm, benign_label),
        per_class=per_class,
    )
