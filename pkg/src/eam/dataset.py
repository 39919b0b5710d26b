"""MNIST IDX loading and the stratified 57/33/10 fold rotation."""
from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional, Sequence

import numpy as np

from .errors import FormatError

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
N_FOLDS = 10
TRAIN_SHARE = 57
REM_SHARE = 33

MNIST_FILES = (
    ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
)


def _read(path) -> bytes:
    path = Path(path)
    if path.suffix == ".gz":
        with gzip.open(path, "rb") as f:
            return f.read()
    return path.read_bytes()


def _header(data: bytes, magic: int, ndims: int, path) -> Sequence[int]:
    need = 4 * (1 + ndims)
    if len(data) < need:
        raise FormatError(f"{path}: truncated header")
    got, *dims = struct.unpack_from(f">{1 + ndims}I", data)
    if got != magic:
        raise FormatError(f"{path}: magic 0x{got:08x}, expected 0x{magic:08x}")
    return dims


def load_idx_images(path) -> np.ndarray:
    """Read an IDX image file into an ``(N, 28, 28)`` uint8 array."""
    data = _read(path)
    count, rows, cols = _header(data, IMAGE_MAGIC, 3, path)
    if (rows, cols) != (28, 28):
        raise FormatError(f"{path}: images are {rows}x{cols}, expected 28x28")
    payload = np.frombuffer(data, dtype=np.uint8, offset=16)
    if payload.size < count * rows * cols:
        raise FormatError(
            f"{path}: truncated payload ({payload.size} of {count * rows * cols} bytes)")
    return payload[:count * rows * cols].reshape(count, rows, cols).copy()


def load_idx_labels(path) -> np.ndarray:
    data = _read(path)
    (count,) = _header(data, LABEL_MAGIC, 1, path)
    payload = np.frombuffer(data, dtype=np.uint8, offset=8)
    if payload.size < count:
        raise FormatError(f"{path}: truncated payload ({payload.size} of {count} labels)")
    labels = payload[:count].copy()
    if labels.size and labels.max() > 9:
        raise FormatError(f"{path}: label {labels.max()} outside 0-9")
    return labels


@dataclass(frozen=True, eq=False)
class LabeledCorpus:
    images: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise ValueError(f"{len(self.images)} images but {len(self.labels)} labels")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() > 9):
            raise ValueError("labels must be digits 0-9")

    def __len__(self) -> int:
        return len(self.labels)


def load_corpus(images_path, labels_path) -> LabeledCorpus:
    return LabeledCorpus(load_idx_images(images_path),
                         load_idx_labels(labels_path).astype(np.int64))


def _find(directory: Path, stem: str) -> Optional[Path]:
    for name in (stem, stem + ".gz", stem.replace("-idx", ".idx"),
                 stem.replace("-idx", ".idx") + ".gz"):
        if (directory / name).exists():
            return directory / name
    return None


def load_mnist_dir(directory) -> LabeledCorpus:
    """Concatenate the official training and test files into one corpus."""
    directory = Path(directory)
    images, labels = [], []
    for img_stem, lbl_stem in MNIST_FILES:
        img, lbl = _find(directory, img_stem), _find(directory, lbl_stem)
        if img is None or lbl is None:
            raise FileNotFoundError(f"{directory}: missing {img_stem} / {lbl_stem}")
        c = load_corpus(img, lbl)
        images.append(c.images)
        labels.append(c.labels)
    return LabeledCorpus(np.concatenate(images), np.concatenate(labels))


@dataclass(frozen=True, eq=False)
class Partition:
    train_idx: np.ndarray
    rem_idx: np.ndarray
    test_idx: np.ndarray


def _class_orders(labels: np.ndarray, seed: int) -> Dict[int, np.ndarray]:
    # same per-class order for every fold, so test slices never overlap
    orders = {}
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        rng = np.random.default_rng([seed, int(c)])
        orders[int(c)] = idx[rng.permutation(idx.size)]
    return orders


def make_partition(labels, fold: int, seed: int) -> Partition:
    """Stratified split where slice ``fold`` of every class is the test set.

    Within each class the remaining 90% is split 57:33 into training and
    remembered (register-filling) items, keeping the shuffled order.
    """
    if not 0 <= fold < N_FOLDS:
        raise ValueError(f"fold {fold} outside [0, {N_FOLDS})")
    labels = np.asarray(labels)
    train, rem, test = [], [], []
    for c, order in _class_orders(labels, seed).items():
        bounds = np.rint(np.linspace(0, order.size, N_FOLDS + 1)).astype(int)
        lo, hi = bounds[fold], bounds[fold + 1]
        test.append(order[lo:hi])
        rest = np.concatenate([order[:lo], order[hi:]])
        n_train = int(np.rint(rest.size * TRAIN_SHARE / (TRAIN_SHARE + REM_SHARE)))
        train.append(rest[:n_train])
        rem.append(rest[n_train:])
    return Partition(np.concatenate(train), np.concatenate(rem), np.concatenate(test))


def nested_fill(labels, rem_idx, fraction: float) -> np.ndarray:
    """Stratified prefix of ``rem_idx`` holding ``fraction`` of each class.

    Prefixes keep ``rem_idx`` order, so larger fractions contain smaller
    ones.  A positive fraction keeps at least one item per class.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"fill fraction {fraction} outside [0, 1]")
    labels = np.asarray(labels)
    rem_idx = np.asarray(rem_idx)
    out = []
    for c in np.unique(labels[rem_idx]):
        idx = rem_idx[labels[rem_idx] == c]
        k = int(np.ceil(round(fraction * idx.size, 9)))
        out.append(idx[:k])
    return np.concatenate(out) if out else rem_idx[:0]
