"""Building manifests from image directories and iNaturalist CSV exports."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from .images import IMAGE_SUFFIXES, ImageDecodeError, decode_image
from .manifest import ManifestError, SampleManifest, SampleRecord, content_hash, type_tag_class

log = logging.getLogger(__name__)


@dataclass
class IngestResult:
    records: list[SampleRecord] = field(default_factory=list)
    skipped: list[tuple[str, str]] = field(default_factory=list)

    def summary(self) -> str:
        return f"{len(self.records)} records, {len(self.skipped)} skipped"


def ingest_directory(path, class_: str, type_tag: str, source: str = "other", relative_to=None) -> IngestResult:
    """One record per decodable image directly inside ``path`` (sorted by file name).

    Undecodable files are skipped with a warning and listed in
    ``result.skipped``.  Paths are stored relative to ``relative_to`` when given.
    """
    if type_tag_class(type_tag) != class_:
        raise ManifestError(f"type_tag {type_tag!r} does not belong to class {class_!r}")
    root = Path(path)
    result = IngestResult()
    if not root.is_dir():
        raise FileNotFoundError(f"not a directory: {root}")
    for file in sorted(p for p in root.iterdir() if p.is_file()):
        if file.suffix.lower() not in IMAGE_SUFFIXES:
            continue
        try:
            decode_image(file)
            digest = content_hash(file.read_bytes())
        except (ImageDecodeError, OSError) as exc:
            log.warning("skipping %s: %s", file, exc)
            result.skipped.append((str(file), str(exc)))
            continue
        stored = file.relative_to(relative_to) if relative_to is not None else file
        result.records.append(SampleRecord(stored.as_posix(), class_, type_tag, source, "unassigned", digest))
    if result.skipped:
        log.warning("%s: %s", root, result.summary())
    return result


# ------------------------------------------------------------- iNaturalist


DEFAULT_TAXA = {
    "Physalia physalis": ("PMW", "pmw"),
    "Velella velella": ("not-PMW", "velella"),
}


@dataclass
class CsvMapping:
    """Which CSV columns hold the image location and the taxon, and how taxa map to labels.

    ``default`` labels taxa absent from ``taxa``; when None such rows are errors.
    """

    path_columns: tuple[str, ...] = ("local_path", "image_path", "image_url")
    taxon_columns: tuple[str, ...] = ("scientific_name", "taxon_name")
    taxa: dict[str, tuple[str, str]] = field(default_factory=lambda: dict(DEFAULT_TAXA))
    default: tuple[str, str] | None = ("not-PMW", "jellyfish")

    @classmethod
    def load(cls, path) -> "CsvMapping":
        raw = json.loads(Path(path).read_text())
        m = cls()
        if "path_columns" in raw:
            m.path_columns = tuple(raw["path_columns"])
        if "taxon_columns" in raw:
            m.taxon_columns = tuple(raw["taxon_columns"])
        if "taxa" in raw:
            m.taxa = {k: tuple(v) for k, v in raw["taxa"].items()}
        if "default" in raw:
            m.default = tuple(raw["default"]) if raw["default"] is not None else None
        return m


class CsvFormatError(ValueError):
    pass


def _pick(header: list[str], candidates, kind: str) -> str:
    for c in candidates:
        if c in header:
            return c
    raise CsvFormatError(f"missing mandatory {kind} column (expected one of: {', '.join(candidates)})")


def ingest_inaturalist_csv(file, mapping: CsvMapping | None = None, base_dir=None) -> IngestResult:
    """Parse an iNaturalist observation export.

    Local image paths are hashed over their bytes; remote URLs (not fetched)
    are hashed over the URL text.  Malformed rows raise :class:`CsvFormatError`
    carrying the line number.
    """
    mapping = mapping or CsvMapping()
    file = Path(file)
    base = Path(base_dir) if base_dir is not None else file.parent
    result = IngestResult()
    with file.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvFormatError(f"{file}: empty CSV") from None
        path_col = header.index(_pick(header, mapping.path_columns, "image path/url"))
        taxon_col = header.index(_pick(header, mapping.taxon_columns, "taxon name"))
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise CsvFormatError(f"{file}:{line}: expected {len(header)} fields, got {len(row)}")
            location, taxon = row[path_col].strip(), row[taxon_col].strip()
            if not location or not taxon:
                raise CsvFormatError(f"{file}:{line}: empty image location or taxon")
            labels = mapping.taxa.get(taxon, mapping.default)
            if labels is None:
                raise CsvFormatError(f"{file}:{line}: taxon {taxon!r} has no label mapping")
            class_, type_tag = labels
            if location.startswith(("http://", "https://")):
                digest = content_hash(location.encode("utf-8"))
            else:
                local = Path(location) if Path(location).is_absolute() else base / location
                try:
                    digest = content_hash(local.read_bytes())
                except OSError as exc:
                    log.warning("skipping %s:%d: %s", file, line, exc)
                    result.skipped.append((location, str(exc)))
                    continue
            try:
                result.records.append(SampleRecord(location, class_, type_tag, "inaturalist", "unassigned", digest))
            except ManifestError as exc:
                raise CsvFormatError(f"{file}:{line}: {exc}") from exc
    return result


# --------------------------------------------------------------- cleanup


def dedupe(manifest: SampleManifest) -> tuple[SampleManifest, int]:
    """Drop records whose content hash was already seen; the first occurrence survives."""
    seen = set()
    kept = []
    for r in manifest.records:
        if r.content_hash in seen:
            continue
        seen.add(r.content_hash)
        kept.append(r)
    return manifest.with_records(kept), len(manifest.records) - len(kept)


def read_exclude_list(path) -> set[str]:
    """Content hashes to drop, one per line; ``#`` starts a comment."""
    out = set()
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            out.add(line.lower())
    return out


def apply_exclude(manifest: SampleManifest, hashes: set[str]) -> tuple[SampleManifest, int]:
    kept = [r for r in manifest.records if r.content_hash.lower() not in hashes]
    return manifest.with_records(kept), len(manifest.records) - len(kept)
