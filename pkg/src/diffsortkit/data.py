"""MNIST IDX parsing, four-digit composites and a synthetic ranking task."""
from __future__ import annotations

import gzip
import os
import struct
from dataclasses import dataclass

import numpy as np

from .diffsort import GroundTruthPermutation
from .network import ranks_of

LABELS_MAGIC = 2049
IMAGES_MAGIC = 2051
_EXPECTED_NDIM = {LABELS_MAGIC: 1, IMAGES_MAGIC: 3}


@dataclass(frozen=True)
class IdxFile:
    magic: int
    dims: tuple
    data: np.ndarray  # uint8, shaped by ``dims``


def parse_idx(blob: bytes, name: str = "<bytes>") -> IdxFile:
    if len(blob) < 4:
        raise ValueError(f"{name}: truncated IDX header")
    magic = struct.unpack(">I", blob[:4])[0]
    if magic not in _EXPECTED_NDIM:
        raise ValueError(f"{name}: bad IDX magic {magic} (expected 2049 for labels or 2051 for images)")
    ndim = blob[3]
    if ndim != _EXPECTED_NDIM[magic]:
        raise ValueError(f"{name}: magic {magic} requires {_EXPECTED_NDIM[magic]} dimension(s), header says {ndim}")
    header = 4 + 4 * ndim
    if len(blob) < header:
        raise ValueError(f"{name}: truncated IDX header")
    dims = struct.unpack(f">{ndim}I", blob[4:header])
    size = int(np.prod(dims, dtype=np.int64))
    if len(blob) - header != size:
        raise ValueError(f"{name}: payload has {len(blob) - header} bytes, dimensions {dims} need {size}")
    data = np.frombuffer(blob, dtype=np.uint8, offset=header).reshape(dims)
    return IdxFile(magic, tuple(dims), data)


def load_idx(path) -> IdxFile:
    """Read an IDX file; gzip-compressed files are detected by their magic bytes."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:2] == b"\x1f\x8b":
        blob = gzip.decompress(blob)
    return parse_idx(blob, str(path))


def find_mnist(directory, split: str = "train"):
    """Locate the image and label files of ``split`` (``train`` or ``t10k``) in ``directory``."""
    prefix = "train" if split == "train" else "t10k"
    found = {}
    for kind in ("images-idx3-ubyte", "labels-idx1-ubyte"):
        for suffix in ("", ".gz"):
            path = os.path.join(directory, f"{prefix}-{kind}{suffix}")
            if os.path.exists(path):
                found[kind] = path
                break
        else:
            raise FileNotFoundError(f"no {prefix}-{kind}[.gz] in {directory}")
    return found["images-idx3-ubyte"], found["labels-idx1-ubyte"]


def load_mnist(directory, split: str = "train"):
    """``(images uint8 (N, 28, 28), labels uint8 (N,))``."""
    img_path, lbl_path = find_mnist(directory, split)
    images = load_idx(img_path)
    labels = load_idx(lbl_path)
    if images.magic != IMAGES_MAGIC or labels.magic != LABELS_MAGIC:
        raise ValueError(f"{directory}: image/label files swapped or mislabeled")
    if images.dims[0] != labels.dims[0]:
        raise ValueError(f"{directory}: {images.dims[0]} images but {labels.dims[0]} labels")
    return images.data, labels.data


def make_four_digit(rng, images, labels, count: int):
    """Concatenate four random digits side by side.

    Returns ``(images (count, 28, 112) in [0, 1], values (count,))`` where a
    value is the decimal number read left to right.
    """
    images = np.asarray(images)
    labels = np.asarray(labels)
    if count < 1:
        raise ValueError("count must be at least 1")
    if images.shape[0] == 0 or images.shape[0] != labels.shape[0]:
        raise ValueError("need a non-empty source with one label per image")
    pick = rng.integers(0, images.shape[0], size=(count, 4))
    h, w = images.shape[1:]
    composite = images[pick].transpose(0, 2, 1, 3).reshape(count, h, 4 * w).astype(np.float64) / 255.0
    digits = labels[pick].astype(np.int64)
    values = digits @ np.array([1000, 100, 10, 1])
    return composite, values


@dataclass
class RankingBatch:
    """``inputs[t, c]`` is the feature vector of element ``c`` of tuple ``t``; ``ranks[t]`` its true ranks."""

    inputs: np.ndarray
    ranks: np.ndarray

    def __post_init__(self):
        if self.inputs.ndim != 3 or self.ranks.shape != self.inputs.shape[:2]:
            raise ValueError(f"inputs (T, n, d) and ranks (T, n) disagree: {self.inputs.shape} vs {self.ranks.shape}")

    @property
    def n(self) -> int:
        return self.inputs.shape[1]

    def __len__(self) -> int:
        return self.inputs.shape[0]

    def truth(self, t: int) -> GroundTruthPermutation:
        return GroundTruthPermutation(self.ranks[t])

    def sample(self, rng, batch: int) -> "RankingBatch":
        """Draw ``batch`` tuples with replacement."""
        idx = rng.integers(0, len(self), size=batch)
        return RankingBatch(self.inputs[idx], self.ranks[idx])


@dataclass(frozen=True)
class Teacher:
    """Fixed random network ``tanh(x W1 + b1) W2`` of width 16.

    ``out=None`` gives a scalar score per input, an integer gives that many
    logits.
    """

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray

    @classmethod
    def create(cls, d: int, seed: int = 0, width: int = 16, out: int | None = None) -> "Teacher":
        rng = np.random.default_rng(seed)
        shape = (width,) if out is None else (width, out)
        return cls(rng.normal(size=(d, width)) / np.sqrt(d), rng.normal(scale=0.5, size=width),
                   rng.normal(size=shape) / np.sqrt(width))

    def score(self, x):
        return np.tanh(x @ self.w1 + self.b1) @ self.w2


def synth_ranking(rng, d: int, n: int, tuples: int, teacher_seed: int = 0) -> RankingBatch:
    """Tuples of uniform ``[-1, 1]^d`` points ranked by a seeded teacher network."""
    if d < 1 or n < 1 or tuples < 1:
        raise ValueError("d, n and tuples must be positive")
    x = rng.uniform(-1.0, 1.0, size=(tuples, n, d))
    scores = Teacher.create(d, teacher_seed).score(x)
    return RankingBatch(x, ranks_of(scores))


@dataclass
class ItemPool:
    """Items with scalar values; tuples are formed on demand and ranked by value."""

    features: np.ndarray
    values: np.ndarray

    def sample(self, rng, batch: int, n: int) -> RankingBatch:
        idx = rng.integers(0, self.features.shape[0], size=(batch, n))
        return RankingBatch(self.features[idx], ranks_of(self.values[idx]))


def synth_classes(rng, d: int, classes: int, count: int, teacher_seed: int = 0):
    """Uniform ``[-1, 1]^d`` inputs labelled by the argmax of a seeded teacher's logits."""
    if d < 1 or classes < 2 or count < 1:
        raise ValueError("need d >= 1, classes >= 2 and count >= 1")
    x = rng.uniform(-1.0, 1.0, size=(count, d))
    logits = Teacher.create(d, teacher_seed, out=classes).score(x)
    return x, np.argmax(logits, axis=-1)


def mnist_item_pool(rng, images, labels, count: int) -> ItemPool:
    """Four-digit composites flattened to ``28 * 112`` features."""
    composite, values = make_four_digit(rng, images, labels, count)
    return ItemPool(composite.reshape(count, -1), values)
