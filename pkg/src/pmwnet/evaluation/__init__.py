"""Confusion matrices, classification metrics, error breakdowns and report output."""

from .errors import MisclassificationReport, misclassification_report
from .metrics import (
    ClassMetrics,
    ConfusionMatrix,
    EvaluationReport,
    class_metrics,
    confusion,
    metrics,
    predicted_positive,
)
from .report import FORMATS, REPORT_VERSION, emit_report, report_dict


def evaluate_predictions(probs, labels, records=None, threshold: float = 0.5, architecture: str = "") -> EvaluationReport:
    """Confusion matrix, metrics and (given records) the misclassification breakdown."""
    report = metrics(confusion(probs, labels, threshold), threshold, architecture)
    if records is not None:
        report = report.with_misclassification(misclassification_report(probs, labels, records, threshold))
    return report


__all__ = [
    "ClassMetrics",
    "ConfusionMatrix",
    "EvaluationReport",
    "FORMATS",
    "MisclassificationReport",
    "REPORT_VERSION",
    "class_metrics",
    "confusion",
    "emit_report",
    "evaluate_predictions",
    "metrics",
    "misclassification_report",
    "predicted_positive",
    "report_dict",
]
