"""Dataset ingestion: IDX binaries and a synthetic multi-class generator."""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .core import ClientDataset
from .errors import ConsistencyError, IDXFormatError

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801


def _read_idx_array(path, expected_magic: int) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 4:
        raise IDXFormatError(f"{path}: file too short for an IDX header ({len(raw)} bytes)")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic != expected_magic:
        raise IDXFormatError(f"{path}: bad magic bytes {raw[:4].hex()} "
                             f"(expected {expected_magic:08x})")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise IDXFormatError(f"{path}: truncated dimension header")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    count = int(np.prod(dims, dtype=np.int64))
    if len(raw) - header < count:
        raise IDXFormatError(f"{path}: truncated payload, expected {count} bytes, got {len(raw) - header}")
    if len(raw) - header > count:
        raise IDXFormatError(f"{path}: {len(raw) - header - count} trailing bytes after payload")
    return np.frombuffer(raw, dtype=np.uint8, count=count, offset=header).reshape(dims)


def read_idx(images_path, labels_path) -> ClientDataset:
    """Unsigned-byte images (flattened, scaled to [0, 1]) and labels."""
    images = _read_idx_array(images_path, IMAGES_MAGIC)
    labels = _read_idx_array(labels_path, LABELS_MAGIC)
    if images.shape[0] != labels.shape[0]:
        raise ConsistencyError(f"{images.shape[0]} images but {labels.shape[0]} labels")
    x = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    return ClientDataset(x, labels.astype(np.int64))


def write_idx(path, array: np.ndarray) -> None:
    """Write a uint8 array of rank 1 (labels) or 3 (images) in IDX format."""
    a = np.asarray(array)
    if a.dtype != np.uint8:
        raise ValueError("IDX writer only supports uint8 payloads")
    if a.ndim not in (1, 3):
        raise ValueError("expected rank 1 (labels) or rank 3 (images)")
    magic = 0x00000800 | a.ndim
    head = struct.pack(">I", magic) + struct.pack(f">{a.ndim}I", *a.shape)
    Path(path).write_bytes(head + a.tobytes())


def synthetic_classification(n_samples: int, n_features: int, n_classes: int,
                             rng: np.random.Generator, separation: float = 1.0) -> ClientDataset:
    """Gaussian class clusters squashed into [0, 1] like pixel intensities.

    Class means are drawn once, samples add unit-variance noise, and a
    logistic squash keeps features bounded.  Labels are balanced.
    """
    if n_samples < n_classes:
        raise ValueError("need at least one sample per class")
    means = rng.normal(0.0, separation, size=(n_classes, n_features))
    labels = np.arange(n_samples) % n_classes
    rng.shuffle(labels)
    z = means[labels] + rng.standard_normal((n_samples, n_features))
    return ClientDataset(1.0 / (1.0 + np.exp(-z)), labels.astype(np.int64))
