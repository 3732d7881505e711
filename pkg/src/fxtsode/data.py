"""Synthetic 2-D datasets, IDX image files, and deterministic splits/batching."""

from __future__ import annotations

import csv
import gzip
import struct
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterator

import numpy as np

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class IdxFormatError(ValueError):
    pass


@dataclass
class Dataset:
    X: np.ndarray  # (n, d_x) float64
    y: np.ndarray  # (n,) int64
    name: str
    n_classes: int
    mean: np.ndarray | None = None
    std: np.ndarray | None = None
    domain: tuple[float, float] = (-3.0, 3.0)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.X.ndim != 2 or self.X.shape[0] != self.y.shape[0] or self.X.shape[0] < 1:
            raise ValueError(f"inconsistent dataset shapes X={self.X.shape} y={self.y.shape}")
        if not np.all(np.isfinite(self.X)):
            raise ValueError("dataset contains non-finite features")
        if self.y.min() < 0 or self.y.max() >= self.n_classes:
            raise ValueError("labels out of range")

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def d_x(self) -> int:
        return self.X.shape[1]

    def subset(self, idx) -> "Dataset":
        return replace(self, X=self.X[idx], y=self.y[idx])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{i}" for i in range(self.d_x)] + ["label"])
            for row, label in zip(self.X, self.y):
                w.writerow([repr(float(v)) for v in row] + [int(label)])


def _check_n(n: int, classes: int) -> None:
    if n < classes or n % classes:
        raise ValueError(f"n must be a positive multiple of {classes}, got {n}")


def make_moons(n: int = 2000, noise: float = 0.1, seed: int = 0) -> Dataset:
    """Two interleaving half circles: outer upper arc (class 0) and shifted inner arc (class 1)."""
    _check_n(n, 2)
    if noise < 0:
        raise ValueError("noise must be >= 0")
    rng = np.random.default_rng(seed)
    half = n // 2
    theta = np.linspace(0.0, np.pi, half)
    outer = np.column_stack([np.cos(theta), np.sin(theta)])
    inner = np.column_stack([1.0 - np.cos(theta), 0.5 - np.sin(theta)])
    X = np.vstack([outer, inner]) + noise * rng.standard_normal((n, 2))
    y = np.repeat([0, 1], half)
    return Dataset(X, y, name="moons", n_classes=2)


def make_circles(n: int = 2000, noise: float = 0.05, factor: float = 0.5, seed: int = 0) -> Dataset:
    """Outer unit circle (class 0) around a concentric circle of radius ``factor`` (class 1)."""
    _check_n(n, 2)
    if noise < 0 or not 0 < factor < 1:
        raise ValueError("need noise >= 0 and 0 < factor < 1")
    rng = np.random.default_rng(seed)
    half = n // 2
    theta = np.linspace(0.0, 2 * np.pi, half, endpoint=False)
    ring = np.column_stack([np.cos(theta), np.sin(theta)])
    X = np.vstack([ring, factor * ring]) + noise * rng.standard_normal((n, 2))
    y = np.repeat([0, 1], half)
    return Dataset(X, y, name="circles", n_classes=2)


def make_blobs(n: int = 2000, centers: int = 3, noise: float = 1.0, seed: int = 0) -> Dataset:
    """Isotropic Gaussian blobs around centers evenly spaced on a circle of radius 4."""
    _check_n(n, centers)
    rng = np.random.default_rng(seed)
    angles = 2 * np.pi * np.arange(centers) / centers
    mu = 4.0 * np.column_stack([np.cos(angles), np.sin(angles)])
    y = np.repeat(np.arange(centers), n // centers)
    X = mu[y] + noise * rng.standard_normal((n, 2))
    return Dataset(X, y, name="blobs", n_classes=centers)


SYNTHETIC = {"moons": make_moons, "circles": make_circles, "blobs": make_blobs}


# IDX files

def _open(path):
    path = Path(path)
    return gzip.open(path, "rb") if path.suffix == ".gz" else open(path, "rb")


def read_idx(path) -> tuple[int, np.ndarray]:
    """Raw (magic, uint8 array) from an IDX file."""
    with _open(path) as fh:
        raw = fh.read()
    if len(raw) < 8:
        raise IdxFormatError(f"{path}: truncated header")
    magic = struct.unpack(">I", raw[:4])[0]
    if magic not in (IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC):
        raise IdxFormatError(f"{path}: bad magic 0x{magic:08x}")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise IdxFormatError(f"{path}: truncated header")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    size = int(np.prod(dims))
    if len(raw) - header < size:
        raise IdxFormatError(f"{path}: truncated data ({len(raw) - header} of {size} bytes)")
    if len(raw) - header > size:
        raise IdxFormatError(f"{path}: trailing bytes after data")
    return magic, np.frombuffer(raw, dtype=np.uint8, offset=header, count=size).reshape(dims)


def load_idx(images_path, labels_path, n_classes: int | None = None, name: str = "idx") -> Dataset:
    """Images flattened to rows and scaled to [0, 1]."""
    magic, images = read_idx(images_path)
    if magic != IDX_IMAGES_MAGIC:
        raise IdxFormatError(f"{images_path}: expected image magic 0x{IDX_IMAGES_MAGIC:08x}")
    magic, labels = read_idx(labels_path)
    if magic != IDX_LABELS_MAGIC:
        raise IdxFormatError(f"{labels_path}: expected label magic 0x{IDX_LABELS_MAGIC:08x}")
    if images.shape[0] != labels.shape[0]:
        raise IdxFormatError(f"count mismatch: {images.shape[0]} images vs {labels.shape[0]} labels")
    X = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    y = labels.astype(np.int64)
    k = n_classes if n_classes is not None else max(int(y.max()) + 1 if y.size else 1, 10)
    return Dataset(X, y, name=name, n_classes=k, domain=(0.0, 1.0))


def write_idx(path, array: np.ndarray) -> None:
    """Write a uint8 array as IDX (3-d -> image magic, 1-d -> label magic)."""
    array = np.asarray(array, dtype=np.uint8)
    magic = {3: IDX_IMAGES_MAGIC, 1: IDX_LABELS_MAGIC}.get(array.ndim)
    if magic is None:
        raise IdxFormatError("only 3-d image and 1-d label arrays are supported")
    with open(path, "wb") as fh:
        fh.write(struct.pack(">I", magic))
        fh.write(struct.pack(f">{array.ndim}I", *array.shape))
        fh.write(np.ascontiguousarray(array).tobytes())


def dataset_to_idx(ds: Dataset, images_path, labels_path, side: tuple[int, int]) -> None:
    pixels = np.rint(ds.X * 255.0).astype(np.uint8).reshape(len(ds), *side)
    write_idx(images_path, pixels)
    write_idx(labels_path, ds.y.astype(np.uint8))


# splitting and batching

@dataclass
class Split:
    train: Dataset
    test: Dataset
    batch_size: int
    seed: int

    def batches(self, epoch: int) -> Iterator[tuple[np.ndarray, np.ndarray]]:
        """Shuffled training batches; the order depends only on (seed, epoch)."""
        rng = np.random.default_rng([self.seed, epoch])
        order = rng.permutation(len(self.train))
        for start in range(0, len(order), self.batch_size):
            idx = order[start:start + self.batch_size]
            yield self.train.X[idx], self.train.y[idx]


def standardize(train: Dataset, test: Dataset) -> tuple[Dataset, Dataset]:
    """Per-feature standardization with statistics from ``train`` only."""
    mean = train.X.mean(axis=0)
    std = train.X.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    norm = lambda ds: replace(ds, X=(ds.X - mean) / std, mean=mean, std=std)  # noqa: E731
    return norm(train), norm(test)


def split_and_batch(ds: Dataset, train_frac: float = 0.8, batch: int = 64, seed: int = 0,
                    normalize: bool | None = None) -> Split:
    """Deterministic shuffled train/test split.

    ``normalize`` defaults to standardization for synthetic sets and none for
    image data (already in [0, 1]).
    """
    if not 0 < train_frac < 1:
        raise ValueError("train_frac must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(ds))
    n_train = int(round(train_frac * len(ds)))
    if not 0 < n_train < len(ds):
        raise ValueError("split leaves an empty side")
    train, test = ds.subset(np.sort(order[:n_train])), ds.subset(np.sort(order[n_train:]))
    if normalize is None:
        normalize = ds.domain != (0.0, 1.0)
    if normalize:
        train, test = standardize(train, test)
    return Split(train=train, test=test, batch_size=batch, seed=seed)
