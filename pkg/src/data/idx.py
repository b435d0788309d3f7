# src/data/idx.py - IDX container reader and writer (MNIST distribution format)
#
# Big-endian layout:
#   images: u32 magic 0x00000803 | u32 count | u32 rows | u32 cols | u8 pixels, row-major
#   labels: u32 magic 0x00000801 | u32 count | u8 labels

import logging
import struct
from pathlib import Path
from typing import Tuple, Union

import numpy as np

from errors import DataFormatError, UsageError
from .datasets import RawDataset

logger = logging.getLogger(__name__)

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
PIXEL_SCALE = 255.0

PathLike = Union[str, Path]


def _read_header(data: bytes, fields: int, source: str) -> Tuple[int, ...]:
    size = 4 * fields
    if len(data) < size:
        raise DataFormatError(f"truncated header: need {size} bytes, file has {len(data)}",
                              offset=len(data), source=source)
    return struct.unpack_from(f">{fields}I", data, 0)


def _check_magic(magic: int, expected: int, source: str):
    if magic != expected:
        raise DataFormatError(f"bad magic 0x{magic:08x}, expected 0x{expected:08x}", offset=0, source=source)


def _payload(data: bytes, header: int, expected: int, source: str) -> np.ndarray:
    available = len(data) - header
    if available < expected:
        raise DataFormatError(f"truncated payload: expected {expected} bytes, found {available}",
                              offset=len(data), source=source)
    if available > expected:
        raise DataFormatError(f"{available - expected} trailing bytes after payload",
                              offset=header + expected, source=source)
    return np.frombuffer(data, dtype=np.uint8, offset=header)


def parse_idx_images(data: bytes, source: str = "<images>") -> Tuple[np.ndarray, int, int]:
    """Return pixels scaled to [0, 1] as an N x (rows*cols) matrix, plus rows and cols."""
    magic = _read_header(data, 1, source)[0]
    _check_magic(magic, IMAGE_MAGIC, source)
    _, count, rows, cols = _read_header(data, 4, source)
    pixels = _payload(data, 16, count * rows * cols, source)
    features = pixels.reshape(count, rows * cols).astype(np.float64) / PIXEL_SCALE
    return features, rows, cols


def parse_idx_labels(data: bytes, source: str = "<labels>") -> np.ndarray:
    magic = _read_header(data, 1, source)[0]
    _check_magic(magic, LABEL_MAGIC, source)
    _, count = _read_header(data, 2, source)
    return _payload(data, 8, count, source).astype(np.int64)


def load_idx(images_path: PathLike, labels_path: PathLike, num_classes: int = 0) -> RawDataset:
    """Read an IDX image/label pair into a RawDataset."""
    images_path, labels_path = Path(images_path), Path(labels_path)
    for path in (images_path, labels_path):
        if not path.is_file():
            raise UsageError(f"IDX file not found: {path}")
    features, rows, cols = parse_idx_images(images_path.read_bytes(), str(images_path))
    labels = parse_idx_labels(labels_path.read_bytes(), str(labels_path))
    if labels.shape[0] != features.shape[0]:
        raise DataFormatError(f"label count {labels.shape[0]} does not match image count {features.shape[0]}",
                              offset=4, source=str(labels_path))
    if features.shape[0] == 0:
        raise DataFormatError("file holds no images", offset=4, source=str(images_path))
    logger.info("loaded %d images of %dx%d from %s", features.shape[0], rows, cols, images_path)
    return RawDataset(features, labels, num_classes)


def idx_bytes(dataset: RawDataset, rows: int, cols: int) -> Tuple[bytes, bytes]:
    """Serialize a RawDataset whose features are multiples of 1/255."""
    if rows * cols != dataset.num_features:
        raise UsageError(f"{rows}x{cols} images do not hold {dataset.num_features} features")
    pixels = np.rint(dataset.features * PIXEL_SCALE)
    if np.any(pixels < 0) or np.any(pixels > 255) or not np.array_equal(pixels / PIXEL_SCALE, dataset.features):
        raise UsageError("features are not representable as 8-bit pixels")
    if np.any(dataset.labels > 255):
        raise UsageError("labels do not fit in one byte")
    n = dataset.num_samples
    images = struct.pack(">4I", IMAGE_MAGIC, n, rows, cols) + pixels.astype(np.uint8).tobytes()
    labels = struct.pack(">2I", LABEL_MAGIC, n) + dataset.labels.astype(np.uint8).tobytes()
    return images, labels


def write_idx(dataset: RawDataset, images_path: PathLike, labels_path: PathLike, rows: int, cols: int):
    images, labels = idx_bytes(dataset, rows, cols)
    Path(images_path).write_bytes(images)
    Path(labels_path).write_bytes(labels)
