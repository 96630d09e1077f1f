"""Dataset loading (CIFAR binary format), synthetic sets, splitting and batching.

All randomness comes from numpy's Philox generator, a 64-bit counter-based
PRNG, keyed by the caller's seed, so every split and batch order is a pure
function of its seed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

CIFAR_PIXELS = 3 * 32 * 32
CIFAR10_FILES = tuple(f"data_batch_{i}.bin" for i in range(1, 6)) + ("test_batch.bin",)
CIFAR100_FILES = ("train.bin", "test.bin")
STD_FLOOR = 1e-6


class DataError(Exception):
    """Dataset files are missing or malformed."""


class TruncatedRecordError(DataError):
    pass


@dataclass(frozen=True)
class Dataset:
    images: np.ndarray
    labels: np.ndarray
    class_count: int
    name: str = ""

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise ValueError(f"{len(self.images)} images but {len(self.labels)} labels")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
            raise ValueError(f"labels must lie in [0, {self.class_count})")

    def __len__(self):
        return len(self.labels)

    def subset(self, idx) -> "Dataset":
        return replace(self, images=self.images[idx], labels=self.labels[idx])


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.train_fraction < 1:
            raise ValueError(f"train_fraction must be in (0, 1), got {self.train_fraction}")


def philox(*keys: int) -> np.random.Generator:
    """Philox generator keyed by one or more non-negative integers."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(list(keys))))


# -- CIFAR binary format -----------------------------------------------------------

def _resolve(directory, subdir):
    directory = Path(directory)
    if (directory / subdir).is_dir():
        return directory / subdir
    return directory


def _read_records(path: Path, label_bytes: int, label_index: int, class_count: int):
    if not path.is_file():
        raise DataError(f"missing dataset file: {path}")
    raw = path.read_bytes()
    record = label_bytes + CIFAR_PIXELS
    whole = len(raw) - len(raw) % record
    if whole != len(raw):
        raise TruncatedRecordError(
            f"{path}: truncated record at byte offset {whole} "
            f"({len(raw) - whole} of {record} bytes present)")
    table = np.frombuffer(raw, dtype=np.uint8).reshape(-1, record)
    labels = table[:, label_index].astype(np.int64)
    bad = np.flatnonzero(labels >= class_count)
    if bad.size:
        raise DataError(f"{path}: label {labels[bad[0]]} out of range at byte offset {bad[0] * record}")
    # pixels are stored as a red plane, then green, then blue, each row-major
    images = table[:, label_bytes:].reshape(-1, 3, 32, 32)
    return images, labels


def _load(directory, files, label_bytes, label_index, class_count, name):
    parts = [_read_records(directory / f, label_bytes, label_index, class_count) for f in files]
    images = np.concatenate([p[0] for p in parts])
    labels = np.concatenate([p[1] for p in parts])
    return Dataset(images, labels, class_count, name)


def load_cifar10(directory) -> Dataset:
    """All six CIFAR-10 binary batches merged in file order (train batches, then test)."""
    directory = _resolve(directory, "cifar-10-batches-bin")
    return _load(directory, CIFAR10_FILES, 1, 0, 10, "cifar10")


def load_cifar100(directory) -> Dataset:
    """CIFAR-100 train and test files merged; fine labels (second label byte)."""
    directory = _resolve(directory, "cifar-100-binary")
    return _load(directory, CIFAR100_FILES, 2, 1, 100, "cifar100")


def write_cifar_binary(dataset: Dataset, directory, kind="cifar10", parts=None):
    """Write ``dataset`` (uint8 N x 3 x 32 x 32) in the CIFAR binary layout.

    Records keep their order and are split evenly over the standard file names.
    For CIFAR-100 the coarse label byte is written as ``fine // 5``.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    files = list(parts or (CIFAR10_FILES if kind == "cifar10" else CIFAR100_FILES))
    pixels = dataset.images.reshape(len(dataset), -1).astype(np.uint8)
    labels = dataset.labels.astype(np.uint8)[:, None]
    if kind == "cifar10":
        table = np.concatenate([labels, pixels], axis=1)
    else:
        table = np.concatenate([labels // 5, labels, pixels], axis=1)
    for name, chunk in zip(files, np.array_split(table, len(files))):
        (directory / name).write_bytes(chunk.tobytes())
    return directory


# -- splitting, normalization, batching ----------------------------------------------

def split_indices(n: int, spec: SplitSpec) -> tuple[np.ndarray, np.ndarray]:
    perm = philox(spec.seed).permutation(n)
    cut = math.floor(spec.train_fraction * n)
    return perm[:cut], perm[cut:]


def split(dataset: Dataset, spec: SplitSpec = SplitSpec()) -> tuple[Dataset, Dataset]:
    """Seeded shuffle then a prefix/suffix cut; not stratified by class."""
    train_idx, test_idx = split_indices(len(dataset), spec)
    return dataset.subset(train_idx), dataset.subset(test_idx)


def _stat_axes(images):
    return (0,) + tuple(range(2, images.ndim))


def channel_stats(dataset: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """Per-channel mean and std of ``images / 255`` (channel axis 1)."""
    x = dataset.images.astype(np.float64) / 255.0
    axes = _stat_axes(x)
    mean = x.mean(axis=axes)
    std = np.maximum(x.std(axis=axes), STD_FLOOR)
    return mean, std


def normalize(dataset: Dataset, stats=None, dtype=np.float32) -> tuple[Dataset, tuple]:
    """Standardize ``images / 255`` per channel.

    Pass the train split's ``stats`` when normalizing the test split; when
    ``stats`` is omitted they are computed from ``dataset`` itself.
    """
    if stats is None:
        stats = channel_stats(dataset)
    mean, std = stats
    shape = (1, -1) + (1,) * (dataset.images.ndim - 2)
    x = (dataset.images.astype(np.float64) / 255.0 - mean.reshape(shape)) / std.reshape(shape)
    return replace(dataset, images=x.astype(dtype)), stats


def batches(dataset: Dataset, batch_size: int, seed: int = 0, epoch: int = 0, shuffle: bool = True):
    """Yield ``(images, labels)`` minibatches; the final partial batch is kept."""
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    n = len(dataset)
    order = philox(seed, epoch).permutation(n) if shuffle else np.arange(n)
    for start in range(0, n, batch_size):
        idx = order[start:start + batch_size]
        yield dataset.images[idx], dataset.labels[idx]


# -- synthetic data ------------------------------------------------------------------

def synth_grid2d(n_points: int = 1024, lo: float = -1.0, hi: float = 1.0) -> Dataset:
    """Square lattice of about ``n_points`` points over [lo, hi]^2 (row-major, x2 fastest)."""
    if n_points < 1:
        raise ValueError(f"n_points must be >= 1, got {n_points}")
    side = max(1, round(math.sqrt(n_points)))
    axis = np.linspace(lo, hi, side)
    x1, x2 = np.meshgrid(axis, axis, indexing="ij")
    pts = np.stack([x1.ravel(), x2.ravel()], axis=1)
    return Dataset(pts, np.zeros(len(pts), dtype=np.int64), 1, "grid2d")


def synth_spirals(n: int = 200, noise: float = 0.0, seed: int = 0, turns: float = 1.0) -> Dataset:
    """Two interleaved Archimedean spirals, ``n // 2`` points each (class 0 first)."""
    rng = philox(seed)
    half = n // 2
    t = np.linspace(0.0, 1.0, half)
    r = 0.25 + 0.75 * t
    theta = 2 * np.pi * turns * t
    pts, labels = [], []
    for c in (0, 1):
        angle = theta + np.pi * c
        p = np.stack([r * np.cos(angle), r * np.sin(angle)], axis=1)
        pts.append(p + noise * rng.standard_normal(p.shape))
        labels.append(np.full(half, c, dtype=np.int64))
    return Dataset(np.concatenate(pts), np.concatenate(labels), 2, "spirals")


def synth_cifar(n: int = 6000, class_count: int = 10, seed: int = 0, noise: float = 64.0) -> Dataset:
    """CIFAR-shaped uint8 images drawn around smooth per-class colour templates.

    A stand-in when the real CIFAR files are unavailable: learnable but not
    trivially separable.  Each image is its class template under a random gain
    and shift, blended with a weaker template of a random other class, plus
    pixel noise.
    """
    rng = philox(seed, 1)
    coarse = rng.standard_normal((class_count, 3, 4, 4))
    templates = coarse.repeat(8, axis=2).repeat(8, axis=3)
    # cheap smoothing of the blocky upsample
    for ax in (2, 3):
        templates = (templates + np.roll(templates, 2, axis=ax) + np.roll(templates, -2, axis=ax)) / 3
    labels = rng.integers(0, class_count, size=n)
    others = (labels + rng.integers(1, class_count, size=n)) % class_count if class_count > 1 else labels
    gain = rng.uniform(0.5, 1.5, size=n)
    blend = rng.uniform(0.0, 0.8, size=n)
    shift = rng.integers(-8, 9, size=(n, 4))
    imgs = np.empty((n, 3, 32, 32))
    for i in range(n):
        imgs[i] = (gain[i] * np.roll(templates[labels[i]], tuple(shift[i, :2]), axis=(1, 2))
                   + blend[i] * np.roll(templates[others[i]], tuple(shift[i, 2:]), axis=(1, 2)))
    imgs = 128 + 40 * imgs + noise * rng.standard_normal(imgs.shape)
    return Dataset(np.clip(np.rint(imgs), 0, 255).astype(np.uint8), labels.astype(np.int64),
                   class_count, "synthetic-cifar")
