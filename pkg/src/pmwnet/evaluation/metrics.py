"""Confusion matrices and the accuracy / precision / recall / F1 family.

PMW is the positive class.  A probability exactly at the threshold counts
as positive.  A metric whose denominator is zero is reported as 0 and
named in the ``undefined`` list rather than returned as NaN.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..data.manifest import NOT_PMW, PMW


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fn: int
    fp: int
    tn: int

    def __post_init__(self):
        for name in ("tp", "fn", "fp", "tn"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fn + self.fp + self.tn

    def swapped(self) -> "ConfusionMatrix":
        """The same counts with not-PMW taken as the positive class."""
        return ConfusionMatrix(tp=self.tn, fn=self.fp, fp=self.fn, tn=self.tp)

    def as_dict(self) -> dict:
        return {"tp": self.tp, "fn": self.fn, "fp": self.fp, "tn": self.tn}


def predicted_positive(probs, threshold: float = 0.5) -> np.ndarray:
    return np.asarray(probs, dtype=np.float64).reshape(-1) >= threshold


def confusion(probs, labels, threshold: float = 0.5) -> ConfusionMatrix:
    pred = predicted_positive(probs, threshold)
    y = np.asarray(labels).reshape(-1)
    if pred.shape != y.shape:
        raise ValueError(f"{pred.size} probabilities vs {y.size} labels")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 or 1")
    pos = y == 1
    return ConfusionMatrix(
        tp=int(np.sum(pred & pos)),
        fn=int(np.sum(~pred & pos)),
        fp=int(np.sum(pred & ~pos)),
        tn=int(np.sum(~pred & ~pos)),
    )


def _ratio(num: int | float, den: int | float, name: str, undefined: list) -> float:
    if den == 0:
        undefined.append(name)
        return 0.0
    return num / den


@dataclass
class ClassMetrics:
    """Metrics with one class taken as positive.  ``accuracy`` is the global
    accuracy, which is the same from either class's point of view."""

    accuracy: float
    precision: float
    recall: float
    f1: float
    support: int
    undefined: list[str] = field(default_factory=list)

    def as_dict(self, digits: int | None = None) -> dict:
        r = (lambda v: round(v, digits)) if digits is not None else (lambda v: v)
        return {
            "accuracy": r(self.accuracy),
            "precision": r(self.precision),
            "recall": r(self.recall),
            "f1": r(self.f1),
            "support": self.support,
            "undefined": list(self.undefined),
        }


def class_metrics(cm: ConfusionMatrix) -> ClassMetrics:
    undefined: list[str] = []
    acc = _ratio(cm.tp + cm.tn, cm.total, "accuracy", undefined)
    p = _ratio(cm.tp, cm.tp + cm.fp, "precision", undefined)
    r = _ratio(cm.tp, cm.tp + cm.fn, "recall", undefined)
    f1 = _ratio(2 * p * r, p + r, "f1", undefined)
    return ClassMetrics(acc, p, r, f1, cm.tp + cm.fn, undefined)


@dataclass
class EvaluationReport:
    confusion: ConfusionMatrix
    classes: dict[str, ClassMetrics]
    macro: dict[str, float]
    threshold: float = 0.5
    architecture: str = ""
    misclassification: "MisclassificationReport | None" = None

    @property
    def accuracy(self) -> float:
        return self.classes[PMW].accuracy

    def with_misclassification(self, mis) -> "EvaluationReport":
        return EvaluationReport(self.confusion, self.classes, self.macro, self.threshold, self.architecture, mis)


def metrics(cm: ConfusionMatrix, threshold: float = 0.5, architecture: str = "") -> EvaluationReport:
    """Per-class metrics (each class in turn as positive) and their macro average."""
    classes = {PMW: class_metrics(cm), NOT_PMW: class_metrics(cm.swapped())}
    macro = {k: float(np.mean([getattr(c, k) for c in classes.values()])) for k in ("precision", "recall", "f1")}
    return EvaluationReport(cm, classes, macro, threshold, architecture)
