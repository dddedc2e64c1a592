"""Experiment plumbing: on-disk formats, metrics, reports, and the CLI."""

from .dataio import (
    DatasetFormatError,
    DatasetManifest,
    EpisodeRecord,
    assign_splits,
    decode_sample,
    encode_sample,
    load_checkpoint,
    load_manifest,
    load_mask_samples,
    load_pair_samples,
    read_sample_file,
    save_checkpoint,
    write_dataset,
    write_sample_file,
)
from .metrics import EpochMetrics, MetricsReport, accuracy_from_confusion, confusion_matrix

__all__ = [
    "DatasetFormatError",
    "DatasetManifest",
    "EpisodeRecord",
    "EpochMetrics",
    "MetricsReport",
    "accuracy_from_confusion",
    "assign_splits",
    "confusion_matrix",
    "decode_sample",
    "encode_sample",
    "load_checkpoint",
    "load_manifest",
    "load_mask_samples",
    "load_pair_samples",
    "read_sample_file",
    "save_checkpoint",
    "write_dataset",
    "write_sample_file",
]
