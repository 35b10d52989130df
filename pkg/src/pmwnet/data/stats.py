from __future__ import annotations

from collections import Counter

from .manifest import CLASSES, SOURCES, SPLITS, TYPE_TAGS, SampleManifest


def dataset_stats(manifest: SampleManifest) -> dict[str, dict[str, int]]:
    """Record counts by class, type_tag, source and split (every known key present)."""
    table = {
        "class": Counter({k: 0 for k in CLASSES}),
        "type_tag": Counter({k: 0 for k in TYPE_TAGS}),
        "source": Counter({k: 0 for k in SOURCES}),
        "split": Counter({k: 0 for k in SPLITS}),
    }
    for r in manifest.records:
        table["class"][r.class_] += 1
        table["type_tag"][r.type_tag] += 1
        table["source"][r.source] += 1
        table["split"][r.split] += 1
    out = {k: dict(v) for k, v in table.items()}
    out["total"] = {"records": len(manifest.records)}
    return out


def format_stats(stats: dict[str, dict[str, int]]) -> str:
    lines = []
    for group in ("class", "type_tag", "source", "split"):
        lines.append(group)
        for key, n in stats[group].items():
            lines.append(f"  {key:14s} {n:8d}")
    lines.append(f"total {stats['total']['records']}")
    return "\n".join(lines)
