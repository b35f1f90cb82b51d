"""Dataset ingestion and synthesis.

Covers the stock CIFAR-10 binary batches (3073-byte records: one label
byte, then 3072 channel-major pixel bytes) and deterministic synthetic
classification sets for desk-scale runs. Datasets are immutable after
construction; every generator is a pure function of its seed.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Dataset",
    "CifarFormatError",
    "read_cifar_batch",
    "serialize_cifar_records",
    "load_cifar10",
    "cifar10_channel_stats",
    "synthetic_blobs",
    "subsample",
]

CIFAR_RECORD_BYTES = 3073
_TRAIN_FILES = [f"data_batch_{i}.bin" for i in range(1, 6)]
_TEST_FILE = "test_batch.bin"


class CifarFormatError(ValueError):
    """Raised for files that do not match the CIFAR-10 binary layout."""


@dataclass
class Dataset:
    """Immutable sample collection: inputs (n, *shape), integer labels."""

    inputs: np.ndarray
    labels: np.ndarray
    n_classes: int
    split: str

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=float)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.inputs) == 0 or len(self.inputs) != len(self.labels):
            raise ValueError(f"need matching nonempty inputs/labels, got {len(self.inputs)}/{len(self.labels)}")
        if not np.isfinite(self.inputs).all():
            raise ValueError("inputs contain non-finite values")
        if self.labels.min() < 0 or self.labels.max() >= self.n_classes:
            raise ValueError(f"labels must lie in [0, {self.n_classes})")

    @property
    def n(self) -> int:
        return len(self.labels)

    def subset(self, indices: np.ndarray, split: str | None = None) -> "Dataset":
        return Dataset(self.inputs[indices], self.labels[indices], self.n_classes, split or self.split)


# ---------------------------------------------------------------------------
# CIFAR-10 binary format


def read_cifar_batch(path):
    """Parse one binary batch into (labels uint8 (n,), pixels uint8 (n, 3072))."""
    try:
        blob = np.fromfile(path, dtype=np.uint8)
    except OSError as exc:
        raise CifarFormatError(f"{path}: {exc}") from exc
    n, rem = divmod(blob.size, CIFAR_RECORD_BYTES)
    if rem != 0 or n == 0:
        raise CifarFormatError(
            f"{path}: size {blob.size} is not a positive multiple of {CIFAR_RECORD_BYTES};"
            f" trailing partial record starts at byte offset {n * CIFAR_RECORD_BYTES}"
        )
    records = blob.reshape(n, CIFAR_RECORD_BYTES)
    return records[:, 0].copy(), records[:, 1:].copy()


def serialize_cifar_records(labels: np.ndarray, pixels: np.ndarray) -> bytes:
    """Inverse of read_cifar_batch, byte for byte."""
    labels = np.asarray(labels, dtype=np.uint8)
    pixels = np.asarray(pixels, dtype=np.uint8)
    if pixels.shape != (labels.size, CIFAR_RECORD_BYTES - 1):
        raise ValueError(f"pixels must have shape ({labels.size}, {CIFAR_RECORD_BYTES - 1}), got {pixels.shape}")
    out = np.empty((labels.size, CIFAR_RECORD_BYTES), dtype=np.uint8)
    out[:, 0] = labels
    out[:, 1:] = pixels
    return out.tobytes()


def _to_images(pixels: np.ndarray) -> np.ndarray:
    # channel-major planes (R, G, B), each row-major 32x32, scaled to [0, 1]
    return pixels.reshape(-1, 3, 32, 32).astype(float) / 255.0


def cifar10_channel_stats(directory) -> tuple[tuple[float, float, float], tuple[float, float, float]]:
    """Per-channel mean/std of the training split, on the [0, 1] scale."""
    planes = []
    for name in _TRAIN_FILES:
        _, pixels = read_cifar_batch(os.path.join(directory, name))
        planes.append(_to_images(pixels))
    imgs = np.concatenate(planes)
    mean = imgs.mean(axis=(0, 2, 3))
    std = imgs.std(axis=(0, 2, 3))
    return tuple(float(v) for v in mean), tuple(float(v) for v in std)


def load_cifar10(directory, mean=None, std=None):
    """Load the six stock batch files as (train, test) Datasets.

    Pixels are scaled to [0, 1] and standardized per channel; if mean/std
    are omitted they are computed from the training split (use
    cifar10_channel_stats to materialize them into a run config).
    """
    for name in [*_TRAIN_FILES, _TEST_FILE]:
        path = os.path.join(directory, name)
        if not os.path.exists(path):
            raise CifarFormatError(f"missing CIFAR-10 batch file: {path}")
    if mean is None or std is None:
        mean, std = cifar10_channel_stats(directory)
    mean = np.asarray(mean, dtype=float).reshape(1, 3, 1, 1)
    std = np.asarray(std, dtype=float).reshape(1, 3, 1, 1)

    def load_split(files, split):
        labels, images = [], []
        for name in files:
            lab, pix = read_cifar_batch(os.path.join(directory, name))
            labels.append(lab.astype(np.int64))
            images.append((_to_images(pix) - mean) / std)
        return Dataset(np.concatenate(images), np.concatenate(labels), 10, split)

    return load_split(_TRAIN_FILES, "train"), load_split([_TEST_FILE], "test")


# ---------------------------------------------------------------------------
# synthetic data


def synthetic_blobs(n_classes: int, n_per_class: int, input_dim: int, separation: float, seed: int):
    """Gaussian class clusters (unit sigma) with pairwise mean distance
    equal to `separation`; 80/20 stratified train/test split.

    Class means sit on orthogonal axes, so n_classes <= input_dim.
    """
    if n_classes < 2 or n_per_class < 2 or input_dim < 1:
        raise ValueError(f"need n_classes >= 2, n_per_class >= 2, input_dim >= 1, got ({n_classes}, {n_per_class}, {input_dim})")
    if n_classes > input_dim:
        raise ValueError(f"orthogonal class means need n_classes <= input_dim, got {n_classes} > {input_dim}")
    if separation < 0:
        raise ValueError(f"separation must be >= 0, got {separation}")
    rng = np.random.default_rng(seed)
    scale = separation / np.sqrt(2.0)
    n_train = max(1, int(0.8 * n_per_class))

    train_x, train_y, test_x, test_y = [], [], [], []
    for k in range(n_classes):
        mean = np.zeros(input_dim)
        mean[k] = scale
        points = rng.standard_normal((n_per_class, input_dim)) + mean
        train_x.append(points[:n_train])
        test_x.append(points[n_train:])
        train_y.append(np.full(n_train, k))
        test_y.append(np.full(n_per_class - n_train, k))

    def build(xs, ys, split):
        x = np.concatenate(xs)
        y = np.concatenate(ys)
        order = rng.permutation(len(y))
        return Dataset(x[order], y[order], n_classes, split)

    return build(train_x, train_y, "train"), build(test_x, test_y, "test")


def subsample(dataset: Dataset, n: int, seed: int) -> Dataset:
    """Class-stratified random subset of size n (largest-remainder shares)."""
    if not 1 <= n <= dataset.n:
        raise ValueError(f"n must be in [1, {dataset.n}], got {n}")
    rng = np.random.default_rng(seed)
    classes, counts = np.unique(dataset.labels, return_counts=True)
    exact = n * counts / dataset.n
    take = np.floor(exact).astype(int)
    remainder = n - take.sum()
    if remainder:
        order = sorted(range(len(classes)), key=lambda i: (-(exact[i] - take[i]), i))
        for i in order[:remainder]:
            take[i] += 1
    picked = []
    for cls, k in zip(classes, take):
        members = np.flatnonzero(dataset.labels == cls)
        picked.append(rng.choice(members, size=k, replace=False))
    indices = np.concatenate(picked)
    return dataset.subset(rng.permutation(indices))
