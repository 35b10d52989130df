"""Report rendering: versioned JSON, per-class CSV and plain text tables.

Aggregate accuracy is shown with 4 decimals and per-class figures with 2.
The JSON document always carries the raw confusion counts so every rounded
figure can be recomputed exactly.
"""

from __future__ import annotations

import csv
import io
import json
from typing import Iterable

from .metrics import EvaluationReport

REPORT_VERSION = 1
FORMATS = ("json", "csv", "text-table")
ACC_DIGITS = 4
CLASS_DIGITS = 2

CSV_COLUMNS = ("architecture", "class", "accuracy", "precision", "recall", "f1", "support", "undefined")


def _as_list(reports) -> list[EvaluationReport]:
    return [reports] if isinstance(reports, EvaluationReport) else list(reports)


def _name(r: EvaluationReport) -> str:
    return r.architecture or "model"


def report_dict(r: EvaluationReport) -> dict:
    return {
        "architecture": _name(r),
        "threshold": r.threshold,
        "n": r.confusion.total,
        "confusion": r.confusion.as_dict(),
        "accuracy": round(r.accuracy, ACC_DIGITS),
        "macro": {k: round(v, CLASS_DIGITS) for k, v in r.macro.items()},
        "classes": {c: m.as_dict(CLASS_DIGITS) for c, m in r.classes.items()},
        "misclassification": r.misclassification.as_dict() if r.misclassification is not None else None,
    }


def _json(reports: list[EvaluationReport]) -> str:
    doc = {"report_version": REPORT_VERSION, "reports": [report_dict(r) for r in reports]}
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _csv(reports: list[EvaluationReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in reports:
        for cls, m in r.classes.items():
            d = m.as_dict(CLASS_DIGITS)
            w.writerow([_name(r), cls, f"{r.accuracy:.{ACC_DIGITS}f}"] + [f"{d[k]:.{CLASS_DIGITS}f}" for k in ("precision", "recall", "f1")] + [d["support"], ";".join(d["undefined"])])
    return buf.getvalue()


def _table(header: list[str], rows: Iterable[list[str]]) -> str:
    rows = [header] + list(rows)
    widths = [max(len(row[i]) for row in rows) for i in range(len(header))]
    fmt = lambda row: "| " + " | ".join(cell.ljust(w) for cell, w in zip(row, widths)) + " |"
    rule = "|" + "|".join("-" * (w + 2) for w in widths) + "|"
    return "\n".join([fmt(rows[0]), rule] + [fmt(r) for r in rows[1:]])


def _text(reports: list[EvaluationReport]) -> str:
    f2 = lambda v: f"{v:.{CLASS_DIGITS}f}"
    summary = _table(
        ["Architecture", "Accuracy", "Precision", "Recall", "F1 Score"],
        ([_name(r), f"{r.accuracy:.{ACC_DIGITS}f}", f2(r.macro["precision"]), f2(r.macro["recall"]), f2(r.macro["f1"])] for r in reports),
    )
    per_class = _table(
        ["Architecture", "Class", "Accuracy", "Precision", "Recall", "F1 Score"],
        ([_name(r), c, f2(m.accuracy), f2(m.precision), f2(m.recall), f2(m.f1)] for r in reports for c, m in r.classes.items()),
    )
    parts = [summary, "", per_class]
    for r in reports:
        mis = r.misclassification
        if mis is None:
            continue
        parts += ["", f"{_name(r)}: {mis.fp_total} false positives, {mis.fn_total} false negatives"]
        parts += [f"  FP {tag}: {n}" for tag, n in mis.false_positives.items()]
        parts += [f"  FN {e['image_path']} (p={e['probability']:.3f})" for e in mis.false_negatives]
    return "\n".join(parts) + "\n"


def emit_report(reports, fmt: str = "json") -> bytes:
    """Render one report or a sequence of reports (one per architecture)."""
    rs = _as_list(reports)
    if fmt == "json":
        return _json(rs).encode()
    if fmt == "csv":
        return _csv(rs).encode()
    if fmt == "text-table":
        return _text(rs).encode()
    raise ValueError(f"unknown report format {fmt!r}; choose from {', '.join(FORMATS)}")
