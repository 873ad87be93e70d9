"""Datasets: MNIST IDX files and seeded synthetic Gaussian blobs."""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
DATA_DIR_ENV = "LAPPRUNE_DATA"


class DataError(Exception):
    """Base class for dataset problems (exit code 2 on the command line)."""


class BadMagicError(DataError):
    pass


class TruncatedFileError(DataError):
    pass


class CountMismatchError(DataError):
    pass


@dataclass
class Dataset:
    inputs: np.ndarray
    labels: np.ndarray
    class_count: int

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.inputs) != len(self.labels):
            raise ValueError(f"{len(self.inputs)} inputs but {len(self.labels)} labels")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
            raise ValueError("labels must lie in [0, class_count)")

    def __len__(self):
        return len(self.labels)

    @property
    def input_shape(self) -> tuple:
        return tuple(self.inputs.shape[1:])

    def take(self, n: int) -> "Dataset":
        return Dataset(self.inputs[:n], self.labels[:n], self.class_count)


def _read_header(buf: bytes, path, magic: int, ndim: int):
    if len(buf) < 4:
        raise TruncatedFileError(f"{path}: header truncated ({len(buf)} bytes)")
    found = struct.unpack(">I", buf[:4])[0]
    if found != magic:
        raise BadMagicError(f"{path}: bad magic 0x{found:08x}, expected 0x{magic:08x}")
    if len(buf) < 4 + 4 * ndim:
        raise TruncatedFileError(f"{path}: header truncated ({len(buf)} bytes)")
    return struct.unpack(f">{ndim}I", buf[4:4 + 4 * ndim])


def read_idx_images(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    count, rows, cols = _read_header(buf, path, IMAGE_MAGIC, 3)
    need = 16 + count * rows * cols
    if len(buf) < need:
        raise TruncatedFileError(f"{path}: expected {need} bytes, found {len(buf)}")
    pixels = np.frombuffer(buf, dtype=np.uint8, count=count * rows * cols, offset=16)
    return pixels.reshape(count, rows, cols)


def read_idx_labels(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    (count,) = _read_header(buf, path, LABEL_MAGIC, 1)
    if len(buf) < 8 + count:
        raise TruncatedFileError(f"{path}: expected {8 + count} bytes, found {len(buf)}")
    return np.frombuffer(buf, dtype=np.uint8, count=count, offset=8)


def load_mnist_idx(images_path, labels_path) -> Dataset:
    """Parse an IDX image/label pair; pixels are scaled to [0, 1], shape (N, 1, H, W)."""
    for p in (images_path, labels_path):
        if not Path(p).is_file():
            raise DataError(f"{p}: no such file")
    images = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if len(images) != len(labels):
        raise CountMismatchError(f"{len(images)} images but {len(labels)} labels")
    x = images.astype(np.float64)[:, None] / 255.0
    return Dataset(x, labels, 10)


def write_idx(images: np.ndarray, labels: np.ndarray, images_path, labels_path):
    """Write uint8 images (N, H, W) and labels (N,) as an IDX pair."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    n, r, c = images.shape
    Path(images_path).write_bytes(struct.pack(">4I", IMAGE_MAGIC, n, r, c) + images.tobytes())
    Path(labels_path).write_bytes(struct.pack(">2I", LABEL_MAGIC, len(labels)) + labels.tobytes())


def mnist_dir(path=None) -> Path:
    return Path(path or os.environ.get(DATA_DIR_ENV, "data/mnist"))


def load_mnist(split: str = "train", directory=None) -> Dataset:
    d = mnist_dir(directory)
    prefix = {"train": "train", "test": "t10k"}[split]
    return load_mnist_idx(d / f"{prefix}-images-idx3-ubyte", d / f"{prefix}-labels-idx1-ubyte")


def synthetic_blobs(classes: int = 2, dim: int = 2, count: int = 200, seed: int = 0,
                    spread: float = 4.0) -> Dataset:
    """Isotropic unit-variance Gaussian clusters around seeded centers.

    Labels are balanced (``i % classes``) and shuffled.
    """
    if classes < 2:
        raise ValueError("synthetic_blobs needs at least two classes")
    rng = np.random.default_rng(seed)
    centers = rng.normal(0.0, spread, size=(classes, dim))
    labels = rng.permutation(np.arange(count) % classes)
    x = centers[labels] + rng.standard_normal((count, dim))
    return Dataset(x.reshape(count, dim), labels, classes)
