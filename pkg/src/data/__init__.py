# Data module
from .datasets import (
    FederatedDataset,
    RawDataset,
    merge_datasets,
    partition_by_writer,
    partition_iid,
    synthetic_blobs,
    synthetic_writers,
    train_subset,
)
from .femnist import load_femnist_json
from .idx import idx_bytes, load_idx, parse_idx_images, parse_idx_labels, write_idx

__all__ = [
    "FederatedDataset",
    "RawDataset",
    "idx_bytes",
    "load_femnist_json",
    "load_idx",
    "merge_datasets",
    "parse_idx_images",
    "parse_idx_labels",
    "partition_by_writer",
    "partition_iid",
    "synthetic_blobs",
    "synthetic_writers",
    "train_subset",
    "write_idx",
]
