"""Datasets: IDX reader, synthetic generators, SSL splits and label noise."""
from __future__ import annotations

import gzip
import math
import struct
from dataclasses import dataclass

import numpy as np

from . import rng
from .exceptions import FormatError, StructuralError

IDX_IMAGES = 0x00000803
IDX_LABELS = 0x00000801


@dataclass(frozen=True)
class Dataset:
    """Features ``[N, D]``, integer labels ``[N]`` and an optional test mask."""

    features: np.ndarray
    labels: np.ndarray
    n_classes: int
    is_test: np.ndarray | None = None

    def __post_init__(self):
        X = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        if X.ndim != 2 or X.shape[0] == 0:
            raise StructuralError(f"features must be a non-empty matrix, got shape {X.shape}")
        if y.shape != (X.shape[0],):
            raise StructuralError(f"labels shape {y.shape} does not match {X.shape[0]} rows")
        if y.min() < 0 or y.max() >= self.n_classes:
            raise StructuralError(f"labels must lie in [0, {self.n_classes})")
        if not np.all(np.isfinite(X)):
            raise StructuralError("features must be finite")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        if self.is_test is not None:
            object.__setattr__(self, "is_test", np.asarray(self.is_test, dtype=bool))

    def __len__(self):
        return self.features.shape[0]

    @property
    def n_features(self):
        return self.features.shape[1]

    def subset(self, index):
        mask = None if self.is_test is None else self.is_test[index]
        return Dataset(self.features[index], self.labels[index], self.n_classes, mask)

    def with_test_split(self, test_fraction, seed):
        """Tag a seeded ``floor(test_fraction * N)`` subset as test data."""
        n_test = int(math.floor(test_fraction * len(self)))
        mask = np.zeros(len(self), dtype=bool)
        mask[rng.permutation(rng.derive_seed(seed, "test-split"), len(self))[:n_test]] = True
        return Dataset(self.features, self.labels, self.n_classes, mask)

    @property
    def train(self):
        return self if self.is_test is None else self.subset(~self.is_test)

    @property
    def test(self):
        if self.is_test is None:
            return None
        return self.subset(self.is_test)

    def mean_normalized(self, center=None):
        """Subtract ``center`` (default: the feature mean) from every row."""
        center = self.features.mean(axis=0) if center is None else center
        return Dataset(self.features - center, self.labels, self.n_classes, self.is_test)

    def to_csv(self, path):
        header = "label," + ",".join(f"feat_{j}" for j in range(self.n_features))
        with open(path, "w", newline="") as fh:
            fh.write(header + "\n")
            for label, row in zip(self.labels, self.features):
                fh.write(f"{label}," + ",".join(repr(float(v)) for v in row) + "\n")

    @classmethod
    def from_csv(cls, path, n_classes=None):
        raw = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        labels = raw[:, 0].astype(np.int64)
        return cls(raw[:, 1:], labels, int(n_classes or labels.max() + 1))


# ---------------------------------------------------------------------------
# IDX


def _open(path):
    with open(path, "rb") as fh:
        head = fh.read(2)
    opener = gzip.open if head == b"\x1f\x8b" else open
    with opener(path, "rb") as fh:
        return fh.read()


def read_idx(path):
    """Parse an unsigned-byte IDX file into a uint8 array."""
    raw = _open(path)
    if len(raw) < 4:
        raise FormatError("file too short for an IDX magic number", offset=len(raw))
    magic = struct.unpack(">I", raw[:4])[0]
    if magic >> 8 != 0x08 or magic & 0xFF == 0:
        raise FormatError(f"bad IDX magic 0x{magic:08x}", offset=0)
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise FormatError("truncated IDX dimension header", offset=len(raw))
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    size = int(np.prod(dims))
    if len(raw) < header + size:
        raise FormatError(f"truncated IDX payload: expected {size} bytes", offset=len(raw))
    return np.frombuffer(raw, dtype=np.uint8, count=size, offset=header).reshape(dims)


def write_idx(path, array):
    array = np.ascontiguousarray(array, dtype=np.uint8)
    magic = 0x0800 | array.ndim
    with open(path, "wb") as fh:
        fh.write(struct.pack(">I", magic))
        fh.write(struct.pack(f">{array.ndim}I", *array.shape))
        fh.write(array.tobytes())


def load_idx(images_path, labels_path, n_classes=10):
    """Images (magic 0x803) and labels (magic 0x801) as a :class:`Dataset`.

    Pixels are scaled to [0, 1] and images flattened to rows.
    """
    images = read_idx(images_path)
    labels = read_idx(labels_path)
    if images.ndim < 2:
        raise FormatError(f"{images_path}: expected an image tensor, got {images.ndim} dimension(s)", offset=3)
    if labels.ndim != 1:
        raise FormatError(f"{labels_path}: expected a label vector, got {labels.ndim} dimensions", offset=3)
    if images.shape[0] != labels.shape[0]:
        raise FormatError(f"{images.shape[0]} images but {labels.shape[0]} labels", offset=4)
    features = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    return Dataset(features, labels.astype(np.int64), n_classes)


def load_mnist_5k():
    """The 5000-image MNIST subset bundled with ``mlxtend`` (optional extra)."""
    try:
        from mlxtend.data import mnist_data
    except ImportError as exc:  # pragma: no cover - exercised only without the extra
        raise FormatError("the mnist5k dataset needs the optional 'mlxtend' package") from exc
    X, y = mnist_data()
    return Dataset(X.astype(np.float64) / 255.0, y.astype(np.int64), 10)


def load_digits_8x8():
    """The 1797 8x8 digit images shipped with scikit-learn, scaled to [0, 1]."""
    from sklearn.datasets import load_digits

    bunch = load_digits()
    return Dataset(bunch.data / 16.0, bunch.target, 10)


# ---------------------------------------------------------------------------
# synthetic data


def synth_blobs(n_classes, per_class, n_features=2, spread=0.3, seed=0):
    """Gaussian clusters around centers drawn uniformly from ``[-1, 1]^D``.

    Rows are grouped by class; features are mean-normalized.
    """
    if n_classes < 1 or per_class < 1 or n_features < 1:
        raise StructuralError("blob counts must be positive")
    g = rng.generator(seed, "blobs")
    centers = g.uniform(-1.0, 1.0, size=(n_classes, n_features))
    X = np.repeat(centers, per_class, axis=0) + spread * g.standard_normal((n_classes * per_class, n_features))
    y = np.repeat(np.arange(n_classes), per_class)
    return Dataset(X, y, n_classes).mean_normalized()


def synth_two_moons(n, noise=0.0, seed=0):
    """Two interleaving half circles, ``n // 2`` points each (upper moon is class 0)."""
    if n < 2:
        raise StructuralError("two moons needs at least two points")
    g = rng.generator(seed, "moons")
    n0 = n // 2
    n1 = n - n0
    t0 = np.linspace(0.0, math.pi, n0)
    t1 = np.linspace(0.0, math.pi, n1)
    upper = np.column_stack([np.cos(t0), np.sin(t0)])
    lower = np.column_stack([1.0 - np.cos(t1), 0.5 - np.sin(t1)])
    X = np.vstack([upper, lower])
    if noise:
        X = X + noise * g.standard_normal(X.shape)
    y = np.concatenate([np.zeros(n0, dtype=np.int64), np.ones(n1, dtype=np.int64)])
    return Dataset(X, y, 2).mean_normalized()


# ---------------------------------------------------------------------------
# semi-supervised splits and label noise


@dataclass(frozen=True)
class SslSplit:
    labeled: np.ndarray
    unlabeled: np.ndarray


def make_ssl_split(labels, n_labeled, seed=0, n_classes=None):
    """Class-balanced labeled indices; everything else is unlabeled.

    Each class gets ``n_labeled // K`` examples; the remainder goes one each
    to the lowest class indices.  Classes with too few members contribute
    what they have and the shortfall is filled from the remaining pool.
    """
    if isinstance(labels, Dataset):
        n_classes = labels.n_classes if n_classes is None else n_classes
        labels = labels.labels
    labels = np.asarray(labels, dtype=np.int64)
    n_classes = int(labels.max() + 1) if n_classes is None else n_classes
    n = labels.size
    if n_labeled < n_classes:
        raise StructuralError(f"need at least one labeled example per class ({n_classes}), got {n_labeled}")
    if n_labeled > n:
        raise StructuralError(f"cannot label {n_labeled} of {n} examples")
    order = rng.permutation(rng.derive_seed(seed, "ssl-split"), n)
    quota = np.full(n_classes, n_labeled // n_classes)
    quota[: n_labeled % n_classes] += 1
    chosen = []
    taken = np.zeros(n_classes, dtype=np.int64)
    for i in order:
        c = labels[i]
        if taken[c] < quota[c]:
            taken[c] += 1
            chosen.append(i)
    if len(chosen) < n_labeled:
        picked = set(chosen)
        chosen.extend([i for i in order if i not in picked][: n_labeled - len(chosen)])
    labeled = np.sort(np.array(chosen, dtype=np.int64))
    mask = np.ones(n, dtype=bool)
    mask[labeled] = False
    return SslSplit(labeled, np.flatnonzero(mask))


def inject_label_noise(labels, rate, seed=0, n_classes=None):
    """Redraw ``floor(rate * N)`` labels uniformly from all K classes.

    Returns ``(noisy_labels, mask)`` where ``mask`` marks the selected
    indices (a redraw may coincide with the original label).
    """
    if not 0.0 <= rate <= 1.0:
        raise StructuralError(f"noise rate must be in [0, 1], got {rate}")
    labels = np.asarray(labels, dtype=np.int64)
    n_classes = int(labels.max() + 1) if n_classes is None else n_classes
    n = labels.size
    count = int(math.floor(rate * n))
    chosen = rng.permutation(rng.derive_seed(seed, "noise-select"), n)[:count]
    noisy = labels.copy()
    noisy[chosen] = rng.randint(rng.derive_seed(seed, "noise-label"), n_classes, count)
    mask = np.zeros(n, dtype=bool)
    mask[chosen] = True
    return noisy, mask
