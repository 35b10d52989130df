from .dataset import ArrayDataset
from .augment import IDENTITY, AugmentConfig, augment, hflip
from .images import ImageDecodeError, decode_image, encode_ppm, encode_raw, load_image, resize_bilinear
from .ingest import (
    CsvFormatError,
    CsvMapping,
    IngestResult,
    apply_exclude,
    dedupe,
    ingest_directory,
    ingest_inaturalist_csv,
    read_exclude_list,
)
from .manifest import (
    CLASSES,
    NOT_PMW,
    PMW,
    SOURCES,
    SPLITS,
    TYPE_TAGS,
    ManifestError,
    SampleManifest,
    SampleRecord,
    content_hash,
)
from .split import controlled_rounding, largest_remainder, stratified_split
from .stats import dataset_stats, format_stats

__all__ = [
    "ArrayDataset",
    "AugmentConfig",
    "CLASSES",
    "CsvFormatError",
    "CsvMapping",
    "IDENTITY",
    "ImageDecodeError",
    "IngestResult",
    "ManifestError",
    "NOT_PMW",
    "PMW",
    "SOURCES",
    "SPLITS",
    "SampleManifest",
    "SampleRecord",
    "TYPE_TAGS",
    "apply_exclude",
    "augment",
    "content_hash",
    "controlled_rounding",
    "dataset_stats",
    "decode_image",
    "dedupe",
    "encode_ppm",
    "encode_raw",
    "format_stats",
    "hflip",
    "ingest_directory",
    "ingest_inaturalist_csv",
    "largest_remainder",
    "load_image",
    "read_exclude_list",
    "resize_bilinear",
    "stratified_split",
]
