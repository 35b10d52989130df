from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .images import load_image
from .manifest import SampleManifest, SampleRecord


@dataclass
class ArrayDataset:
    """Decoded images ``x`` [N,3,H,W] (float32, [0,1]) with 0/1 labels ``y``."""

    x: np.ndarray
    y: np.ndarray
    records: list[SampleRecord] = field(default_factory=list)

    def __post_init__(self):
        if len(self.x) != len(self.y):
            raise ValueError(f"{len(self.x)} images but {len(self.y)} labels")

    def __len__(self) -> int:
        return len(self.y)

    def subset(self, idx) -> "ArrayDataset":
        idx = np.asarray(idx, dtype=np.intp)
        recs = [self.records[i] for i in idx] if self.records else []
        return ArrayDataset(self.x[idx], self.y[idx], recs)

    @classmethod
    def from_manifest(cls, manifest: SampleManifest, split: str | None, size=(32, 32)) -> "ArrayDataset":
        records = [r for r in manifest.records if split is None or r.split == split]
        h, w = size
        x = np.empty((len(records), 3, h, w), dtype=np.float32)
        for i, r in enumerate(records):
            x[i] = load_image(manifest.resolve(r), (h, w))
        y = np.array([r.label for r in records], dtype=np.int64)
        return cls(x, y, records)
