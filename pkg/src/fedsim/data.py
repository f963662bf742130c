"""Datasets, IDX ingestion and client partitioning."""

from __future__ import annotations

import gzip
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, IngestionError

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray  # (n, d) float64
    labels: np.ndarray  # (n,) int64
    class_count: int

    def __post_init__(self) -> None:
        if self.features.ndim != 2:
            raise ConfigError(f"features must be 2-D, got shape {self.features.shape}")
        if len(self.features) != len(self.labels):
            raise ConfigError(f"{len(self.features)} feature rows but {len(self.labels)} labels")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
            raise ConfigError(f"labels outside [0, {self.class_count})")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, indices: np.ndarray) -> Dataset:
        return Dataset(self.features[indices], self.labels[indices], self.class_count)


@dataclass(frozen=True)
class PartitionPlan:
    """Disjoint example indices per client."""

    assignments: tuple[np.ndarray, ...]

    @property
    def client_count(self) -> int:
        return len(self.assignments)

    @property
    def sample_counts(self) -> list[int]:
        return [len(a) for a in self.assignments]

    def coefficients(self) -> list[float]:
        """Sample-count share of each client, ``|D_m| / sum_c |D_c|``."""
        total = sum(self.sample_counts)
        return [n / total for n in self.sample_counts]


# ---------------------------------------------------------------- IDX files

def _open(path: str | Path):
    path = Path(path)
    return gzip.open(path, "rb") if path.suffix == ".gz" else open(path, "rb")


def _read_idx(path: str | Path, magic: int) -> tuple[np.ndarray, tuple[int, ...]]:
    with _open(path) as fh:
        raw = fh.read()
    if len(raw) < 8:
        raise IngestionError(f"{path}: truncated header at offset {len(raw)}")
    (found,) = struct.unpack_from(">I", raw, 0)
    if found != magic:
        raise IngestionError(
            f"{path}: bad magic 0x{found:08X} at offset 0, expected 0x{magic:08X}"
        )
    ndims = magic & 0xFF
    header = 4 + 4 * ndims
    if len(raw) < header:
        raise IngestionError(f"{path}: truncated header at offset {len(raw)}, need {header} bytes")
    dims = struct.unpack_from(f">{ndims}I", raw, 4)
    expected = header + math.prod(dims)
    if len(raw) < expected:
        raise IngestionError(
            f"{path}: truncated data at offset {len(raw)}, header promises {expected} bytes"
        )
    if len(raw) > expected:
        raise IngestionError(f"{path}: {len(raw) - expected} trailing bytes after offset {expected}")
    return np.frombuffer(raw, dtype=np.uint8, offset=header), dims


def load_idx(images_path: str | Path, labels_path: str | Path, class_count: int = 10) -> Dataset:
    """Read an IDX image/label pair; pixels are scaled into [0, 1]."""
    pixels, idims = _read_idx(images_path, IMAGES_MAGIC)
    labels, ldims = _read_idx(labels_path, LABELS_MAGIC)
    if idims[0] != ldims[0]:
        raise IngestionError(
            f"{images_path} holds {idims[0]} images but {labels_path} holds {ldims[0]} labels"
            " (count field at offset 4)"
        )
    features = pixels.reshape(idims[0], -1).astype(np.float64) / 255.0
    labels = labels.astype(np.int64)
    if len(labels) and labels.max() >= class_count:
        raise IngestionError(f"{labels_path}: label {labels.max()} >= class count {class_count}")
    return Dataset(features, labels, class_count)


def write_idx(dataset: Dataset, images_path: str | Path, labels_path: str | Path,
              shape: tuple[int, int] | None = None) -> None:
    """Write features (must be multiples of 1/255 in [0, 1]) and labels as IDX."""
    n, d = dataset.features.shape
    rows, cols = shape or (1, d)
    if rows * cols != d:
        raise ConfigError(f"image shape {shape} does not hold {d} features")
    pixels = np.rint(dataset.features * 255.0).astype(np.uint8)
    images = struct.pack(">IIII", IMAGES_MAGIC, n, rows, cols) + pixels.tobytes()
    labels = struct.pack(">II", LABELS_MAGIC, n) + dataset.labels.astype(np.uint8).tobytes()
    for path, payload in ((images_path, images), (labels_path, labels)):
        path = Path(path)
        opener = gzip.open if path.suffix == ".gz" else open
        with opener(path, "wb") as fh:
            fh.write(payload)


# ----------------------------------------------------------- synthetic data

def synth_blobs(class_count: int, dim: int, per_class: int, spread: float, seed: int,
                centers_seed: int | None = None) -> Dataset:
    """Gaussian clusters around centers drawn uniformly on the unit sphere.

    ``centers_seed`` (default ``seed``) fixes the centers alone, so a test set
    can be drawn from the same distribution with a different ``seed``.
    """
    if class_count < 2 or per_class < 1 or dim < 1:
        raise ConfigError(f"synth_blobs needs C>=2, n>=1, d>=1; got C={class_count}, n={per_class}, d={dim}")
    if spread < 0:
        raise ConfigError(f"spread must be >= 0, got {spread}")
    centers = np.random.default_rng([int(centers_seed if centers_seed is not None else seed), 0]) \
        .standard_normal((class_count, dim))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    rng = np.random.default_rng([int(seed), 1])
    labels = np.repeat(np.arange(class_count), per_class)
    features = centers[labels] + spread * rng.standard_normal((len(labels), dim))
    order = rng.permutation(len(labels))
    return Dataset(features[order], labels[order].astype(np.int64), class_count)


# ------------------------------------------------------------- partitioning

def partition_iid(dataset: Dataset, clients: int, seed: int) -> PartitionPlan:
    """Seeded shuffle split into ``clients`` parts whose sizes differ by at most one."""
    n = len(dataset)
    if clients < 1 or clients > n:
        raise ConfigError(f"cannot split {n} examples across {clients} clients")
    order = np.random.default_rng(seed).permutation(n)
    return PartitionPlan(tuple(np.sort(part) for part in np.array_split(order, clients)))


def partition_label_shards(dataset: Dataset, clients: int, classes_per_client: int,
                           seed: int) -> PartitionPlan:
    """Sort by label, cut into ``clients * classes_per_client`` equal shards and deal them out.

    The ``n mod shard_count`` examples at the tail of the sorted order are dropped.
    """
    if clients < 1 or classes_per_client < 1:
        raise ConfigError(f"invalid shard layout: {clients} clients x {classes_per_client} shards")
    shard_count = clients * classes_per_client
    shard_size = len(dataset) // shard_count
    if shard_size < 1:
        raise ConfigError(f"{len(dataset)} examples cannot form {shard_count} shards")
    by_label = np.argsort(dataset.labels, kind="stable")
    shards = by_label[: shard_count * shard_size].reshape(shard_count, shard_size)
    dealt = np.random.default_rng(seed).permutation(shard_count).reshape(clients, classes_per_client)
    return PartitionPlan(tuple(np.sort(shards[row].ravel()) for row in dealt))
