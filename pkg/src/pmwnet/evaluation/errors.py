from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..data.manifest import SampleManifest, SampleRecord
from .metrics import predicted_positive


@dataclass
class MisclassificationReport:
    """False positives counted by image type, false negatives listed for review."""

    false_positives: dict[str, int] = field(default_factory=dict)
    false_negatives: list[dict] = field(default_factory=list)

    @property
    def fp_total(self) -> int:
        return sum(self.false_positives.values())

    @property
    def fn_total(self) -> int:
        return len(self.false_negatives)

    def __bool__(self) -> bool:
        return bool(self.false_positives or self.false_negatives)

    def as_dict(self) -> dict:
        return {
            "false_positives": dict(self.false_positives),
            "false_negatives": list(self.false_negatives),
            "fp_total": self.fp_total,
            "fn_total": self.fn_total,
        }


def misclassification_report(
    probs,
    labels,
    records: SampleManifest | Sequence[SampleRecord],
    threshold: float = 0.5,
) -> MisclassificationReport:
    recs = records.records if isinstance(records, SampleManifest) else list(records)
    pred = predicted_positive(probs, threshold)
    p = np.asarray(probs, dtype=np.float64).reshape(-1)
    y = np.asarray(labels).reshape(-1)
    if not (len(recs) == len(pred) == len(y)):
        raise ValueError(f"{len(pred)} probabilities, {len(y)} labels, {len(recs)} records")
    fp = Counter()
    fn = []
    for i, r in enumerate(recs):
        if pred[i] and y[i] == 0:
            fp[r.type_tag] += 1
        elif not pred[i] and y[i] == 1:
            fn.append({"image_path": r.image_path, "type_tag": r.type_tag, "source": r.source, "probability": float(p[i])})
    ordered = dict(sorted(fp.items(), key=lambda kv: (-kv[1], kv[0])))
    return MisclassificationReport(ordered, fn)
