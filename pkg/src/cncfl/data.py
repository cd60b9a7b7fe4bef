"""Datasets, client partitioning and MNIST IDX ingestion."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .errors import IdxParseError, InvalidInputError

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801


class Sample(NamedTuple):
    features: np.ndarray
    label: int


@dataclass(frozen=True, eq=False)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    image_shape: tuple[int, int] | None = None

    def __post_init__(self) -> None:
        x = np.array(self.features, dtype=np.float64)
        y = np.array(self.labels, dtype=np.int64).reshape(-1)
        if x.ndim != 2 or x.shape[0] != y.size:
            raise InvalidInputError(f"features {x.shape} and labels {y.shape} disagree")
        if y.size and (y.min() < 0 or y.max() >= self.num_classes):
            raise InvalidInputError(f"labels outside [0, {self.num_classes})")
        if not np.all(np.isfinite(x)):
            raise InvalidInputError("features contain NaN or Inf")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)

    def __len__(self) -> int:
        return self.labels.size

    def __getitem__(self, i: int) -> Sample:
        return Sample(self.features[i], int(self.labels[i]))

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> Dataset:
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.features[idx], self.labels[idx], self.num_classes, self.image_shape)


@dataclass(frozen=True, eq=False)
class Shard(Dataset):
    client_id: int = 0

    def __post_init__(self) -> None:
        super().__post_init__()
        if len(self) == 0:
            raise InvalidInputError(f"shard for client {self.client_id} is empty")


def _shard(ds: Dataset, idx, client_id: int) -> Shard:
    idx = np.asarray(idx, dtype=np.int64)
    return Shard(ds.features[idx], ds.labels[idx], ds.num_classes, ds.image_shape, client_id=client_id)


def _class_means(rng: np.random.Generator, dim: int, classes: int, separation: float) -> np.ndarray:
    # Scaled basis vectors are pairwise exactly `separation` apart.
    if classes <= dim:
        means = np.zeros((classes, dim))
        means[np.arange(classes), np.arange(classes)] = separation / np.sqrt(2.0)
        return means
    means = rng.normal(size=(classes, dim))
    diffs = means[:, None, :] - means[None, :, :]
    dist = np.sqrt((diffs**2).sum(-1))[np.triu_indices(classes, 1)]
    return means * (separation / dist.min()) if separation > 0 else np.zeros_like(means)


def gen_synthetic(seed: int, n: int, dim: int, classes: int, separation: float) -> Dataset:
    """Isotropic unit-variance Gaussian blobs, one per class.

    When ``classes <= dim`` every pair of class means is exactly ``separation``
    apart; otherwise means are random directions scaled so the closest pair is.
    """
    if dim < 1:
        raise InvalidInputError(f"dim must be >= 1, got {dim}")
    if classes < 2:
        raise InvalidInputError(f"classes must be >= 2, got {classes}")
    if n < classes:
        raise InvalidInputError(f"need at least one sample per class (n={n}, classes={classes})")
    if separation < 0:
        raise InvalidInputError("separation must be non-negative")
    rng = np.random.default_rng(seed)
    means = _class_means(rng, dim, classes, separation)
    labels = rng.permutation(np.arange(n) % classes)
    features = means[labels] + rng.normal(size=(n, dim))
    return Dataset(features, labels, classes)


def train_test_split(ds: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    if not 0 < test_fraction < 1:
        raise InvalidInputError(f"test_fraction must be in (0, 1), got {test_fraction}")
    order = np.random.default_rng(seed).permutation(len(ds))
    n_test = max(1, int(round(test_fraction * len(ds))))
    return ds.subset(np.sort(order[n_test:])), ds.subset(np.sort(order[:n_test]))


def _apportion(total: int, weights: Sequence[float]) -> np.ndarray:
    """Largest-remainder split of ``total`` proportional to ``weights``; ties favour earlier slots."""
    w = np.asarray(weights, dtype=np.float64)
    if w.size == 0 or np.any(w <= 0) or not np.all(np.isfinite(w)):
        raise InvalidInputError("size weights must be positive and finite")
    ideal = total * w / w.sum()
    sizes = np.floor(ideal).astype(np.int64)
    remainder = ideal - sizes
    extra = total - int(sizes.sum())
    order = sorted(range(w.size), key=lambda i: (-remainder[i], i))
    for i in order[:extra]:
        sizes[i] += 1
    return sizes


def partition_iid(
    ds: Dataset, num_clients: int, seed: int, size_weights: Sequence[float] | None = None
) -> list[Shard]:
    """Shuffle and split into ``num_clients`` shards.

    Without ``size_weights`` shard sizes differ by at most one (earlier shards
    take the remainder). With weights, sizes are proportional to them.
    """
    if num_clients < 1:
        raise InvalidInputError(f"num_clients must be >= 1, got {num_clients}")
    if len(ds) < num_clients:
        raise InvalidInputError(f"{len(ds)} samples cannot fill {num_clients} shards")
    weights = [1.0] * num_clients if size_weights is None else list(size_weights)
    if len(weights) != num_clients:
        raise InvalidInputError(f"{len(weights)} size weights for {num_clients} clients")
    sizes = _apportion(len(ds), weights)
    if np.any(sizes < 1):
        raise InvalidInputError("size weights leave a client with no samples")
    order = np.random.default_rng(seed).permutation(len(ds))
    bounds = np.concatenate([[0], np.cumsum(sizes)])
    return [_shard(ds, order[bounds[i] : bounds[i + 1]], i) for i in range(num_clients)]


def partition_label_skew(
    ds: Dataset, num_clients: int, labels_per_client: int, seed: int
) -> list[Shard]:
    """Label-skewed shards built from single-label blocks.

    Each label's samples are cut into blocks (block counts apportioned to label
    frequency, at least one per present label, ``num_clients * labels_per_client``
    in total). Blocks sorted by label are dealt round-robin to a seeded client
    order, so each client receives ``labels_per_client`` blocks and therefore
    at most that many distinct labels.
    """
    if num_clients < 1:
        raise InvalidInputError(f"num_clients must be >= 1, got {num_clients}")
    if not 1 <= labels_per_client <= ds.num_classes:
        raise InvalidInputError(
            f"labels_per_client must be in [1, {ds.num_classes}], got {labels_per_client}"
        )
    present, counts = np.unique(ds.labels, return_counts=True)
    n_blocks = num_clients * labels_per_client
    if n_blocks < present.size:
        raise InvalidInputError(
            f"{n_blocks} blocks cannot cover {present.size} labels; "
            "raise num_clients or labels_per_client"
        )
    if n_blocks > len(ds):
        raise InvalidInputError(f"{n_blocks} blocks exceed {len(ds)} samples")

    per_label = 1 + _apportion(n_blocks - present.size, counts.astype(float))
    # A label cannot be cut into more blocks than it has samples; move the excess.
    while np.any(per_label > counts):
        over = int(np.argmax(per_label - counts))
        spare = np.flatnonzero(per_label < counts)
        if spare.size == 0:
            raise InvalidInputError("not enough samples to form the requested blocks")
        per_label[over] -= 1
        per_label[spare[np.argmax((counts - per_label)[spare])]] += 1

    rng = np.random.default_rng(seed)
    blocks: list[np.ndarray] = []
    for label, k in zip(present, per_label):
        idx = rng.permutation(np.flatnonzero(ds.labels == label))
        blocks.extend(np.array_split(idx, int(k)))

    client_order = rng.permutation(num_clients)
    owned: list[list[np.ndarray]] = [[] for _ in range(num_clients)]
    for b, block in enumerate(blocks):
        owned[int(client_order[b % num_clients])].append(block)
    return [_shard(ds, np.sort(np.concatenate(owned[c])), c) for c in range(num_clients)]


def _read_exact(buf: bytes, offset: int, size: int, field_name: str) -> bytes:
    if offset + size > len(buf):
        raise IdxParseError(field_name, f"truncated file: need {offset + size} bytes, have {len(buf)}")
    return buf[offset : offset + size]


def parse_idx_images(buf: bytes) -> np.ndarray:
    (magic,) = struct.unpack(">I", _read_exact(buf, 0, 4, "images.magic"))
    if magic != IMAGES_MAGIC:
        raise IdxParseError("images.magic", f"unexpected magic 0x{magic:08x}, want 0x{IMAGES_MAGIC:08x}")
    n, rows, cols = struct.unpack(">III", _read_exact(buf, 4, 12, "images.dims"))
    body = _read_exact(buf, 16, n * rows * cols, "images.pixels")
    if len(buf) != 16 + n * rows * cols:
        raise IdxParseError("images.pixels", f"{len(buf) - 16 - n * rows * cols} trailing bytes")
    return np.frombuffer(body, dtype=np.uint8).reshape(n, rows, cols)


def parse_idx_labels(buf: bytes) -> np.ndarray:
    (magic,) = struct.unpack(">I", _read_exact(buf, 0, 4, "labels.magic"))
    if magic != LABELS_MAGIC:
        raise IdxParseError("labels.magic", f"unexpected magic 0x{magic:08x}, want 0x{LABELS_MAGIC:08x}")
    (n,) = struct.unpack(">I", _read_exact(buf, 4, 4, "labels.count"))
    body = _read_exact(buf, 8, n, "labels.values")
    if len(buf) != 8 + n:
        raise IdxParseError("labels.values", f"{len(buf) - 8 - n} trailing bytes")
    return np.frombuffer(body, dtype=np.uint8)


def load_idx(images_path, labels_path, num_classes: int = 10) -> Dataset:
    images = parse_idx_images(Path(images_path).read_bytes())
    labels = parse_idx_labels(Path(labels_path).read_bytes())
    if images.shape[0] != labels.shape[0]:
        raise IdxParseError(
            "count", f"count mismatch: {images.shape[0]} images but {labels.shape[0]} labels"
        )
    if labels.size and labels.max() >= num_classes:
        raise IdxParseError("labels.values", f"label {labels.max()} >= num_classes {num_classes}")
    n, rows, cols = images.shape
    features = images.reshape(n, rows * cols).astype(np.float64) / 255.0
    return Dataset(features, labels.astype(np.int64), num_classes, (rows, cols))


def idx_bytes(ds: Dataset) -> tuple[bytes, bytes]:
    """Serialize back to (images, labels) IDX bytes; inverse of :func:`load_idx`."""
    if ds.image_shape is None:
        raise InvalidInputError("dataset has no image shape to serialize")
    rows, cols = ds.image_shape
    pixels = np.rint(ds.features * 255.0)
    if pixels.min(initial=0) < 0 or pixels.max(initial=0) > 255:
        raise InvalidInputError("features outside [0, 1] cannot be stored as u8 pixels")
    n = len(ds)
    images = struct.pack(">IIII", IMAGES_MAGIC, n, rows, cols) + pixels.astype(np.uint8).tobytes()
    labels = struct.pack(">II", LABELS_MAGIC, n) + ds.labels.astype(np.uint8).tobytes()
    return images, labels
