"""Sample records and JSON-lines manifests."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Iterator

PMW = "PMW"
NOT_PMW = "not-PMW"
CLASSES = (PMW, NOT_PMW)
TYPE_TAGS = ("pmw", "person", "ship", "illustration", "tattoo", "velella", "jellyfish", "random")
SOURCES = ("instagram", "inaturalist", "bing", "other")
SPLITS = ("train", "val", "test", "unassigned")


class ManifestError(ValueError):
    pass


def content_hash(data: bytes) -> str:
    """64-bit BLAKE2b digest as 16 hex characters."""
    return hashlib.blake2b(data, digest_size=8).hexdigest()


@dataclass(frozen=True)
class SampleRecord:
    image_path: str
    class_: str
    type_tag: str
    source: str = "other"
    split: str = "unassigned"
    content_hash: str = ""

    def __post_init__(self):
        if not self.image_path:
            raise ManifestError("image_path must be non-empty")
        if self.class_ not in CLASSES:
            raise ManifestError(f"unknown class {self.class_!r}")
        if self.type_tag not in TYPE_TAGS:
            raise ManifestError(f"unknown type_tag {self.type_tag!r}")
        if (self.class_ == PMW) != (self.type_tag == "pmw"):
            raise ManifestError(f"class {self.class_!r} inconsistent with type_tag {self.type_tag!r}")
        if self.source not in SOURCES:
            raise ManifestError(f"unknown source {self.source!r}")
        if self.split not in SPLITS:
            raise ManifestError(f"unknown split {self.split!r}")

    @property
    def label(self) -> int:
        return 1 if self.class_ == PMW else 0

    @property
    def stratum(self) -> str:
        return f"{self.class_}/{self.type_tag}"

    def to_json(self) -> dict:
        d = asdict(self)
        d["class"] = d.pop("class_")
        return {k: d[k] for k in ("image_path", "class", "type_tag", "source", "split", "content_hash")}

    @classmethod
    def from_json(cls, d: dict) -> "SampleRecord":
        d = dict(d)
        d["class_"] = d.pop("class")
        return cls(**d)


def type_tag_class(type_tag: str) -> str:
    return PMW if type_tag == "pmw" else NOT_PMW


@dataclass
class SampleManifest:
    records: list[SampleRecord] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)
    seed: int | None = None
    base_dir: Path | None = None

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[SampleRecord]:
        return iter(self.records)

    def extend(self, records: Iterable[SampleRecord]) -> None:
        self.records.extend(records)

    def split(self, name: str) -> list[SampleRecord]:
        return [r for r in self.records if r.split == name]

    def resolve(self, record: SampleRecord) -> Path:
        p = Path(record.image_path)
        if not p.is_absolute() and self.base_dir is not None:
            p = self.base_dir / p
        return p

    def with_records(self, records: list[SampleRecord]) -> "SampleManifest":
        return replace(self, records=list(records), notes=list(self.notes))

    # ---------------------------------------------------------------- io

    def dumps(self) -> str:
        return "".join(json.dumps(r.to_json(), sort_keys=False) + "\n" for r in self.records)

    def save(self, path) -> None:
        path = Path(path)
        path.write_text(self.dumps(), encoding="utf-8")
        meta = {"seed": self.seed, "notes": self.notes, "count": len(self.records)}
        path.with_suffix(path.suffix + ".meta.json").write_text(json.dumps(meta, indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "SampleManifest":
        path = Path(path)
        records = []
        with path.open(encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    records.append(SampleRecord.from_json(json.loads(line)))
                except (json.JSONDecodeError, TypeError, KeyError, ManifestError) as exc:
                    raise ManifestError(f"{path}:{lineno}: bad manifest record: {exc}") from exc
        manifest = cls(records, base_dir=path.parent.resolve())
        meta = path.with_suffix(path.suffix + ".meta.json")
        if meta.exists():
            info = json.loads(meta.read_text())
            manifest.seed = info.get("seed")
            manifest.notes = list(info.get("notes", []))
        return manifest
