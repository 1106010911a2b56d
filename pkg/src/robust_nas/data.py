"""Seeded toy datasets, half/half splitting, minibatching and CSV ingestion."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.datasets import make_blobs, make_moons

KINDS = ("moons", "spirals", "blobs")
BLOB_CENTERS = np.array([[-1.0, -1.0], [1.0, 1.0]])


class DataError(ValueError):
    pass


@dataclass
class Dataset:
    inputs: np.ndarray
    labels: np.ndarray
    num_classes: int
    provenance: str = ""

    def __post_init__(self) -> None:
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.inputs.ndim != 2 or self.labels.shape != (self.inputs.shape[0],):
            raise DataError(f"inputs {self.inputs.shape} and labels {self.labels.shape} disagree")
        if len(self.labels) < 1:
            raise DataError("a dataset needs at least one example")
        if np.isnan(self.inputs).any():
            raise DataError("inputs contain NaN")
        if self.labels.min() < 0 or self.labels.max() >= self.num_classes:
            raise DataError(f"labels must lie in [0, {self.num_classes})")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def width(self) -> int:
        return self.inputs.shape[1]

    def subset(self, idx, tag: str = "") -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.inputs[idx], self.labels[idx], self.num_classes, self.provenance + tag)


def _spirals(n: int, noise: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    n0 = n - n // 2
    counts = (n0, n // 2)
    xs, ys = [], []
    for k, m in enumerate(counts):
        t = np.linspace(0.0, 1.0, m, endpoint=False) if m else np.zeros(0)
        r = 0.1 + t
        theta = 3.0 * np.pi * t + k * np.pi
        pts = np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1)
        xs.append(pts + noise * rng.standard_normal(pts.shape))
        ys.append(np.full(m, k))
    x, y = np.concatenate(xs), np.concatenate(ys)
    perm = rng.permutation(n)
    return x[perm], y[perm]


def generate(kind: str, n: int, noise: float, seed: int) -> Dataset:
    """Two-class 2-D toy data; a pure function of its arguments."""
    if kind not in KINDS:
        raise DataError(f"unknown dataset kind {kind!r}; expected one of {KINDS}")
    if n < 2:
        raise DataError("need at least 2 examples")
    if noise < 0:
        raise DataError("noise must be non-negative")
    if kind == "moons":
        x, y = make_moons(n_samples=n, noise=noise or None, random_state=seed)
    elif kind == "blobs":
        x, y = make_blobs(n_samples=n, centers=BLOB_CENTERS, cluster_std=noise, random_state=seed)
    else:
        x, y = _spirals(n, noise, np.random.default_rng(seed))
    return Dataset(x, y, 2, f"{kind}(n={n}, noise={noise}, seed={seed})")


def split_half(dataset: Dataset, seed: int) -> tuple[Dataset, Dataset]:
    """Shuffled disjoint halves; with odd ``n`` the training half gets the extra example."""
    n = len(dataset)
    if n < 2:
        raise DataError("need at least 2 examples to split")
    perm = np.random.default_rng(seed).permutation(n)
    cut = n - n // 2
    return dataset.subset(perm[:cut], "[train]"), dataset.subset(perm[cut:], "[val]")


def batches(n: int, batch_size: int, seed: int, epoch: int) -> list[np.ndarray]:
    if not 1 <= batch_size <= n:
        raise DataError(f"batch size must be in [1, {n}], got {batch_size}")
    perm = np.random.default_rng([seed, epoch]).permutation(n)
    return [perm[i : i + batch_size] for i in range(0, n, batch_size)]


def minibatch_stream(n: int, batch_size: int, seed: int):
    """Endless sequence of index batches, reshuffled every epoch."""
    epoch = 0
    while True:
        yield from batches(n, batch_size, seed, epoch)
        epoch += 1


def load_csv(path, label_column: str = "label") -> Dataset:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if label_column not in header:
            raise DataError(f"{path}: label column {label_column!r} not found in header {header}")
        li = header.index(label_column)
        xs, ys = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                feats = [float(v) for k, v in enumerate(row) if k != li]
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            raw = row[li].strip()
            try:
                label = int(raw)
            except ValueError:
                raise DataError(f"{path}:{lineno}: label {raw!r} is not an integer") from None
            xs.append(feats)
            ys.append(label)
    if not ys:
        raise DataError(f"{path}: no data rows")
    y = np.array(ys)
    if y.min() < 0:
        raise DataError(f"{path}: labels must be non-negative")
    return Dataset(np.array(xs, dtype=np.float64), y, int(y.max()) + 1, str(path))


def standardize(train: Dataset, *others: Dataset) -> list[Dataset]:
    """Z-score every dataset with statistics of ``train`` only."""
    mu = train.inputs.mean(axis=0)
    sd = train.inputs.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    return [Dataset((d.inputs - mu) / sd, d.labels, d.num_classes, d.provenance + "[z]") for d in (train, *others)]
