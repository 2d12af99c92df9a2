"""MNIST digit source.

By default the 5,000-digit MNIST subset bundled with ``mlxtend`` is used
(500 per class), split per class into 400 train and 100 test digits. Set
``MADMAN_MNIST`` to a Keras-style ``mnist.npz`` (``x_train``, ``y_train``,
``x_test``, ``y_test``) to use the full dataset instead.
"""
from __future__ import annotations

import functools
import hashlib
import os

import numpy as np

from .attributes import canonicalize

SPLITS = ("train", "test")
_BUNDLED_TRAIN_PER_CLASS = 400


class DigitSource:
    """Grayscale digits in [0, 1], canonicalized lazily on first access."""

    def __init__(self, images: dict[str, np.ndarray], labels: dict[str, np.ndarray], name: str):
        self._raw = images
        self.labels = labels
        self.name = name
        self._cache: dict[tuple[str, int], np.ndarray] = {}
        self.by_class = {
            split: [np.flatnonzero(labels[split] == d) for d in range(10)] for split in SPLITS
        }
        h = hashlib.sha256()
        for split in SPLITS:
            h.update(np.ascontiguousarray(images[split]).tobytes())
            h.update(np.ascontiguousarray(labels[split]).tobytes())
        self.fingerprint = h.hexdigest()[:16]

    def __len__(self) -> int:
        return sum(len(v) for v in self.labels.values())

    def count(self, split: str, digit: int) -> int:
        return len(self.by_class[split][digit])

    def index_of(self, split: str, digit: int, k: int) -> int:
        """Index into ``split`` of the k-th example of class ``digit``."""
        return int(self.by_class[split][digit][k])

    def raw(self, split: str, index: int) -> np.ndarray:
        return self._raw[split][index].astype(np.float64) / 255.0

    def get(self, split: str, index: int) -> np.ndarray:
        key = (split, int(index))
        img = self._cache.get(key)
        if img is None:
            img = canonicalize(self.raw(split, index))
            self._cache[key] = img
        return img

    def label(self, split: str, index: int) -> int:
        return int(self.labels[split][index])


def _load_bundled() -> DigitSource:
    from mlxtend.data import mnist_data

    X, y = mnist_data()
    X = X.reshape(-1, 28, 28).astype(np.uint8)
    y = y.astype(np.int64)
    train_idx, test_idx = [], []
    for d in range(10):
        idx = np.flatnonzero(y == d)
        train_idx.append(idx[:_BUNDLED_TRAIN_PER_CLASS])
        test_idx.append(idx[_BUNDLED_TRAIN_PER_CLASS:])
    tr = np.sort(np.concatenate(train_idx))
    te = np.sort(np.concatenate(test_idx))
    return DigitSource({"train": X[tr], "test": X[te]}, {"train": y[tr], "test": y[te]},
                       name="mlxtend-mnist-5k")


def _load_npz(path: str) -> DigitSource:
    with np.load(path) as f:
        images = {"train": f["x_train"].astype(np.uint8), "test": f["x_test"].astype(np.uint8)}
        labels = {"train": f["y_train"].astype(np.int64), "test": f["y_test"].astype(np.int64)}
    return DigitSource(images, labels, name=os.path.basename(path))


@functools.lru_cache(maxsize=None)
def _load(path: str | None) -> DigitSource:
    return _load_npz(path) if path else _load_bundled()


def load_digits() -> DigitSource:
    return _load(os.environ.get("MADMAN_MNIST") or None)
