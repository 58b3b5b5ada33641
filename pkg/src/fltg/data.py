"""Datasets, non-IID client shards, biased root datasets and poisoned variants."""
from __future__ import annotations

import gzip
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, ConsistencyError, FormatError, SamplingExhaustedError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass(frozen=True, eq=False)
class Dataset:
    """Labeled feature vectors.

    ``X`` has shape (N, feature_dim) with values in [0, 1]; ``y`` holds integer
    labels in [0, num_classes). Both arrays are made read-only on construction.
    ``image_shape`` is (rows, cols) when the features are a flattened image.
    """

    X: np.ndarray
    y: np.ndarray
    num_classes: int
    image_shape: tuple[int, int] | None = None

    def __post_init__(self):
        X = np.array(self.X, dtype=np.float64, order="C")
        y = np.array(self.y, dtype=np.int64)
        if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
            raise ConsistencyError(f"bad dataset shapes X{X.shape} y{y.shape}")
        if y.size and (y.min() < 0 or y.max() >= self.num_classes):
            raise ConsistencyError("label outside [0, num_classes)")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    def __len__(self) -> int:
        return self.y.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.X.shape[1]

    def subset(self, indices) -> Dataset:
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.X[idx], self.y[idx], self.num_classes, self.image_shape)

    def replace(self, X=None, y=None) -> Dataset:
        return Dataset(
            self.X if X is None else X,
            self.y if y is None else y,
            self.num_classes,
            self.image_shape,
        )

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.y, minlength=self.num_classes)

    def equals(self, other: Dataset) -> bool:
        return (
            self.num_classes == other.num_classes
            and np.array_equal(self.X, other.X)
            and np.array_equal(self.y, other.y)
        )


@dataclass(frozen=True)
class PartitionParams:
    num_clients: int
    noniid_degree: float
    seed: int = 0


@dataclass(frozen=True)
class TriggerSpec:
    pixel_positions: tuple[int, ...]
    pixel_value: float = 1.0
    target_label: int = 0

    def validate(self, feature_dim: int, num_classes: int) -> None:
        if any(p < 0 or p >= feature_dim for p in self.pixel_positions):
            raise ConfigError("trigger position outside feature range", "attack.params.trigger")
        if not 0 <= self.target_label < num_classes:
            raise ConfigError("trigger target label out of range", "attack.params.trigger")


def _ceil_count(fraction: float, total: int) -> int:
    # round first so e.g. 0.7 * 10 = 7.000000000000001 does not ceil to 8
    return min(total, math.ceil(round(fraction * total, 9)))


def generate_synthetic(
    num_classes: int,
    feature_dim: int,
    per_class: int,
    seed: int,
    noise_std: float = 0.25,
) -> Dataset:
    """Gaussian-mixture classification data.

    Each class mean is a random point on the unit sphere; features are the
    mean plus isotropic Gaussian noise, clipped to [0, 1]. Examples are
    shuffled. Deterministic in ``seed``.
    """
    if num_classes < 2 or per_class < 1:
        raise ConfigError("need num_classes >= 2 and per_class >= 1", "dataset")
    rng = np.random.default_rng(seed)
    means = rng.standard_normal((num_classes, feature_dim))
    means /= np.linalg.norm(means, axis=1, keepdims=True)
    y = np.repeat(np.arange(num_classes), per_class)
    X = means[y] + noise_std * rng.standard_normal((y.size, feature_dim))
    np.clip(X, 0.0, 1.0, out=X)
    order = rng.permutation(y.size)
    side = math.isqrt(feature_dim)
    shape = (side, side) if side * side == feature_dim else None
    return Dataset(X[order], y[order], num_classes, shape)


def _read_bytes(path) -> bytes:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def load_idx(images_path, labels_path, num_classes: int | None = None) -> Dataset:
    """Load an IDX image/label file pair (optionally gzipped).

    Pixels are scaled by 1/255 and flattened row-major.
    """
    images = _read_bytes(images_path)
    labels = _read_bytes(labels_path)
    if len(images) < 16 or len(labels) < 8:
        raise OSError("truncated IDX header")
    magic, n_img, rows, cols = struct.unpack(">IIII", images[:16])
    if magic != IDX_IMAGES_MAGIC:
        raise FormatError(f"{images_path}: bad image magic 0x{magic:08x}")
    magic, n_lab = struct.unpack(">II", labels[:8])
    if magic != IDX_LABELS_MAGIC:
        raise FormatError(f"{labels_path}: bad label magic 0x{magic:08x}")
    if n_img != n_lab:
        raise ConsistencyError(f"{n_img} images but {n_lab} labels")
    n_pix = n_img * rows * cols
    if len(images) - 16 < n_pix or len(labels) - 8 < n_lab:
        raise OSError("truncated IDX payload")
    pixels = np.frombuffer(images, dtype=np.uint8, count=n_pix, offset=16)
    y = np.frombuffer(labels, dtype=np.uint8, count=n_lab, offset=8).astype(np.int64)
    X = pixels.reshape(n_img, rows * cols) / 255.0
    if num_classes is None:
        num_classes = max(10, int(y.max()) + 1) if n_lab else 10
    return Dataset(X, y, num_classes, (rows, cols))


def write_idx(ds: Dataset, images_path, labels_path, image_shape=None) -> None:
    """Write ``ds`` as an uncompressed IDX pair; features are rounded to the 1/255 grid."""
    rows, cols = image_shape or ds.image_shape or (1, ds.feature_dim)
    if rows * cols != ds.feature_dim:
        raise ConsistencyError("image_shape does not match feature_dim")
    pixels = np.rint(ds.X * 255.0).astype(np.uint8)
    Path(images_path).write_bytes(
        struct.pack(">IIII", IDX_IMAGES_MAGIC, len(ds), rows, cols) + pixels.tobytes()
    )
    Path(labels_path).write_bytes(
        struct.pack(">II", IDX_LABELS_MAGIC, len(ds)) + ds.y.astype(np.uint8).tobytes()
    )


def train_test_split(ds: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    order = np.random.default_rng(seed).permutation(len(ds))
    n_test = int(round(test_fraction * len(ds)))
    return ds.subset(np.sort(order[n_test:])), ds.subset(np.sort(order[:n_test]))


def partition_indices(y: np.ndarray, num_classes: int, params: PartitionParams) -> list[np.ndarray]:
    """Index arrays of the grouped-label non-IID split (see ``partition_noniid``)."""
    n, L, q = params.num_clients, num_classes, params.noniid_degree
    if n < L:
        raise ConfigError(f"need at least one client per label group ({n} < {L})", "n_clients")
    if not (1.0 / L - 1e-12 <= q <= 1.0):
        raise ConfigError(f"non-IID degree {q} outside [1/{L}, 1]", "partition.q")
    # client c belongs to group c mod L, so contiguous id ranges span all groups
    groups = [np.arange(g, n, L) for g in range(L)]
    rng = np.random.default_rng(params.seed)
    m = y.shape[0]
    stay = rng.random(m) < q
    # other group chosen uniformly among the L-1 groups != own label
    other = rng.integers(0, L - 1, size=m)
    other = other + (other >= y)
    group = np.where(stay, y, other)
    pick = rng.random(m)
    owner = np.empty(m, dtype=np.int64)
    for g, members in enumerate(groups):
        sel = group == g
        owner[sel] = members[(pick[sel] * len(members)).astype(np.int64)]
    return [np.flatnonzero(owner == c) for c in range(n)]


def partition_noniid(ds: Dataset, params: PartitionParams) -> list[Dataset]:
    """Split ``ds`` across clients with label skew controlled by ``noniid_degree``.

    Clients form ``num_classes`` equal groups, group ``l`` (clients with
    ``id % num_classes == l``) owning label ``l``.
    An example with label ``l`` goes to a random client of group ``l`` with
    probability q, otherwise to a random client of one of the other groups.
    q = 1/L gives an IID split, q = 1 a fully label-skewed one.
    """
    if len(ds) == 0:
        raise ConfigError("cannot partition an empty dataset", "dataset")
    return [ds.subset(idx) for idx in partition_indices(ds.y, ds.num_classes, params)]


def sample_root_indices(y: np.ndarray, num_classes: int, size: int, bias_p: float, seed: int) -> np.ndarray:
    if size > y.shape[0]:
        raise SamplingExhaustedError(f"root size {size} exceeds dataset size {y.shape[0]}")
    if not 0.0 <= bias_p <= 1.0:
        raise ConfigError(f"bias probability {bias_p} outside [0, 1]", "root.bias_p")
    rng = np.random.default_rng(seed)
    biased = rng.random(size) < bias_p
    other = 1 + rng.integers(0, num_classes - 1, size=size)
    classes = np.where(biased, 0, other)
    out = np.empty(size, dtype=np.int64)
    for c in range(num_classes):
        slots = np.flatnonzero(classes == c)
        if slots.size == 0:
            continue
        pool = np.flatnonzero(y == c)
        if pool.size < slots.size:
            raise SamplingExhaustedError(
                f"root sampling needs {slots.size} examples of class {c}, only {pool.size} available"
            )
        out[slots] = rng.choice(pool, size=slots.size, replace=False)
    return out


def sample_root_dataset(ds: Dataset, size: int, bias_p: float, seed: int) -> Dataset:
    """Draw a root dataset biased toward class 0.

    Each draw is class 0 with probability ``bias_p``, otherwise a uniformly
    random other class; examples are taken without replacement.
    """
    return ds.subset(sample_root_indices(ds.y, ds.num_classes, size, bias_p, seed))


def flip_labels(ds: Dataset, mode: str = "remap", target: int | None = None) -> Dataset:
    """Label-flipping poison: ``remap`` sends l to L-1-l, ``to_target`` sends every label to ``target``."""
    if mode == "remap":
        return ds.replace(y=ds.num_classes - 1 - ds.y)
    if mode == "to_target":
        if target is None or not 0 <= target < ds.num_classes:
            raise ConfigError(f"invalid flip target {target}", "attack.params.target")
        return ds.replace(y=np.full_like(ds.y, target))
    raise ConfigError(f"unknown label-flip mode {mode!r}", "attack.params.mode")


def default_trigger(feature_dim: int, image_shape=None, target_label: int = 0) -> TriggerSpec:
    """3x3 white patch in the bottom-right corner, or the last 9 features if not image-shaped."""
    if image_shape is None:
        side = math.isqrt(feature_dim)
        image_shape = (side, side) if side * side == feature_dim else None
    if image_shape is None or min(image_shape) < 3:
        positions = tuple(range(max(0, feature_dim - 9), feature_dim))
    else:
        rows, cols = image_shape
        positions = tuple(r * cols + c for r in range(rows - 3, rows) for c in range(cols - 3, cols))
    return TriggerSpec(positions, 1.0, target_label)


def apply_trigger(X: np.ndarray, trig: TriggerSpec) -> np.ndarray:
    out = np.array(X, dtype=np.float64)
    out[:, list(trig.pixel_positions)] = trig.pixel_value
    return out


def embed_trigger(ds: Dataset, trig: TriggerSpec, fraction: float, seed: int) -> Dataset:
    """Stamp the trigger on a seeded subset of ceil(fraction * N) examples and relabel them."""
    if not 0.0 <= fraction <= 1.0:
        raise ConfigError(f"trigger fraction {fraction} outside [0, 1]", "attack.params.fraction")
    count = _ceil_count(fraction, len(ds))
    if count == 0:
        return ds
    idx = np.sort(np.random.default_rng(seed).choice(len(ds), size=count, replace=False))
    X = np.array(ds.X)
    y = np.array(ds.y)
    X[np.ix_(idx, list(trig.pixel_positions))] = trig.pixel_value
    y[idx] = trig.target_label
    return ds.replace(X=X, y=y)
