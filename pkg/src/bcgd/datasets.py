"""Synthetic Gaussian blobs and IDX (MNIST-format) loading."""

import struct
from dataclasses import dataclass

import numpy as np

from ._random import stream
from .exceptions import ConfigError, FormatError

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801


@dataclass(frozen=True)
class Dataset:
    inputs: np.ndarray  # (samples, features)
    labels: np.ndarray
    name: str = ""
    n_classes: int = 0
    normalization: str = "none"

    def __post_init__(self):
        X = np.ascontiguousarray(self.inputs, dtype=np.float64)
        y = np.asarray(self.labels)
        if X.ndim != 2:
            raise ValueError(f"inputs must be 2-D, got shape {X.shape}")
        if y.shape != (X.shape[0],):
            raise ValueError(f"{X.shape[0]} rows but {y.size} labels")
        if not np.all(np.isfinite(X)):
            raise ValueError("inputs must be finite")
        y = y.astype(np.int64)
        k = self.n_classes or (int(y.max()) + 1 if y.size else 0)
        if y.size and (y.min() < 0 or y.max() >= k):
            raise ValueError(f"labels must lie in [0, {k})")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "inputs", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "n_classes", int(k))

    @property
    def n_features(self):
        return self.inputs.shape[1]

    def __len__(self):
        return self.inputs.shape[0]

    def subset(self, idx, name=None):
        return Dataset(self.inputs[idx], self.labels[idx], name or self.name, self.n_classes, self.normalization)


def simplex_means(n_classes, n_features, separation):
    """Class means at the vertices of a regular simplex with edge length ``separation``.

    The simplex spans ``n_classes - 1`` dimensions; with fewer features only
    the leading coordinates are kept.
    """
    centered = np.eye(n_classes) - 1.0 / n_classes
    # rows of U*S are the vertex coordinates in an orthonormal basis of the simplex
    u, s, _ = np.linalg.svd(centered)
    coords = (u * s)[:, : n_classes - 1] * (separation / np.sqrt(2.0))
    means = np.zeros((n_classes, n_features))
    keep = min(n_classes - 1, n_features)
    means[:, :keep] = coords[:, :keep]
    return means


def gen_gaussian_blobs(n_samples, n_features, n_classes, separation, seed=0):
    """Balanced Gaussian blobs with identity covariance, standardized per feature."""
    for name, val in (("n_samples", n_samples), ("n_features", n_features), ("n_classes", n_classes)):
        if int(val) != val or val < 1:
            raise ConfigError(f"{name} must be a positive integer, got {val!r}")
    if n_classes > n_samples:
        raise ConfigError(f"n_classes={n_classes} exceeds n_samples={n_samples}")
    if separation < 0:
        raise ConfigError("separation must be non-negative")
    rng = stream(seed, "data")
    labels = rng.permutation(np.arange(n_samples) % n_classes)
    X = simplex_means(n_classes, n_features, separation)[labels] + rng.standard_normal((n_samples, n_features))
    std = X.std(axis=0)
    X = (X - X.mean(axis=0)) / np.where(std > 0, std, 1.0)
    return Dataset(X, labels, "blobs", n_classes, "standardize")


def train_val_split(data, train_fraction=0.8):
    """First ``train_fraction`` of the rows for training, the rest for validation."""
    cut = int(round(train_fraction * len(data)))
    return data.subset(slice(0, cut), f"{data.name}-train"), data.subset(slice(cut, None), f"{data.name}-val")


def _read_header(buf, path, magic, ndim):
    need = 4 + 4 * ndim
    if len(buf) < need:
        raise FormatError(f"{path}: truncated header ({len(buf)} bytes, need {need})")
    (found,) = struct.unpack(">I", buf[:4])
    if found != magic:
        raise FormatError(f"{path}: bad magic number 0x{found:08x}, expected 0x{magic:08x}")
    return struct.unpack(f">{ndim}I", buf[4:need]), need


def read_idx_images(path):
    buf = open(path, "rb").read()
    (count, rows, cols), off = _read_header(buf, path, IMAGE_MAGIC, 3)
    size = count * rows * cols
    if len(buf) - off < size:
        raise FormatError(f"{path}: truncated pixel data ({len(buf) - off} bytes, header says {size})")
    return np.frombuffer(buf, dtype=np.uint8, count=size, offset=off).reshape(count, rows * cols)


def read_idx_labels(path):
    buf = open(path, "rb").read()
    (count,), off = _read_header(buf, path, LABEL_MAGIC, 1)
    if len(buf) - off < count:
        raise FormatError(f"{path}: truncated label data ({len(buf) - off} bytes, header says {count})")
    return np.frombuffer(buf, dtype=np.uint8, count=count, offset=off)


def load_idx(images_path, labels_path):
    """Images scaled to [0, 1] as rows, with their labels."""
    images = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if images.shape[0] != labels.shape[0]:
        raise FormatError(f"count mismatch: {images.shape[0]} images but {labels.shape[0]} labels")
    n_classes = int(labels.max()) + 1 if labels.size else 0
    return Dataset(images / 255.0, labels, "idx", n_classes, "scale255")


def write_idx(images, labels, images_path, labels_path):
    """Write uint8 images (count, rows, cols) and labels in IDX format."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    with open(images_path, "wb") as f:
        f.write(struct.pack(">4I", IMAGE_MAGIC, *images.shape))
        f.write(images.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">2I", LABEL_MAGIC, labels.size))
        f.write(labels.tobytes())
