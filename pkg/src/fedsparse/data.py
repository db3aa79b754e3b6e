"""Synthetic dataset generation, Dirichlet (LDA) partitioning, batching.

Everything here is pure and seed-driven; identical seeds reproduce
identical datasets, partitions, and batch orders.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .seeding import rng_for

MAX_PARTITION_ATTEMPTS = 100


@dataclass
class LabeledDataset:
    """Feature matrix [N, d] with integer labels in [0, C)."""

    inputs: np.ndarray
    labels: np.ndarray
    split: str = "train"

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.inputs.shape[0] != self.labels.shape[0]:
            raise ConfigError("inputs and labels disagree on sample count")
        if self.inputs.shape[0] < 1:
            raise ConfigError("dataset must contain at least one sample")

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def num_classes(self) -> int:
        return int(self.labels.max()) + 1

    @property
    def dim(self) -> int:
        return int(np.prod(self.inputs.shape[1:]))

    def subset(self, indices: np.ndarray) -> "LabeledDataset":
        return LabeledDataset(self.inputs[indices], self.labels[indices], self.split)


def _train_test_counts(per_class: int) -> tuple[int, int]:
    # 80/20 split; both sides stay nonempty for per_class >= 2
    n_train = max(1, int(np.floor(per_class * 0.8)))
    if n_train == per_class:
        n_train -= 1
    return n_train, per_class - n_train


def make_synthetic(classes: int, dim: int, per_class: int, margin: float,
                   seed: int) -> tuple[LabeledDataset, LabeledDataset]:
    """Gaussian class clusters with unit noise and mean separation ~margin.

    Returns an 80/20 class-stratified (train, test) pair, each shuffled
    deterministically.
    """
    if classes < 2:
        raise ConfigError("need at least 2 classes")
    if per_class < 2:
        raise ConfigError("need at least 2 samples per class")
    if margin <= 0:
        raise ConfigError(f"margin must be positive, got {margin}")
    rng = rng_for(seed, "synthetic")
    directions = rng.normal(size=(classes, dim))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    means = directions * margin

    n_train, n_test = _train_test_counts(per_class)
    train_x, train_y, test_x, test_y = [], [], [], []
    for c in range(classes):
        samples = means[c] + rng.normal(size=(per_class, dim))
        train_x.append(samples[:n_train])
        train_y.append(np.full(n_train, c))
        test_x.append(samples[n_train:])
        test_y.append(np.full(n_test, c))

    def _bundle(xs, ys, tag):
        x = np.concatenate(xs)
        y = np.concatenate(ys)
        order = rng_for(seed, "synthetic-shuffle", tag).permutation(len(y))
        return LabeledDataset(x[order], y[order], tag)

    return _bundle(train_x, train_y, "train"), _bundle(test_x, test_y, "test")


def lda_partition(labels: np.ndarray, num_clients: int, alpha: float,
                  seed: int) -> list[np.ndarray]:
    """Class-wise Dirichlet partition of sample indices across clients.

    For each class a Dirichlet(alpha) proportion vector over clients is
    drawn and the class's indices are distributed multinomially.  Draws
    that leave any client empty are retried with a derived sub-seed, up to
    MAX_PARTITION_ATTEMPTS times.
    """
    if alpha <= 0:
        raise ConfigError(f"alpha must be positive, got {alpha}")
    if num_clients < 1:
        raise ConfigError("need at least one client")
    labels = np.asarray(labels)
    class_values = np.unique(labels)
    for attempt in range(MAX_PARTITION_ATTEMPTS):
        rng = rng_for(seed, "lda", attempt)
        buckets: list[list[np.ndarray]] = [[] for _ in range(num_clients)]
        for c in class_values:
            idx = np.flatnonzero(labels == c)
            idx = rng.permutation(idx)
            proportions = rng.dirichlet(np.full(num_clients, alpha))
            counts = rng.multinomial(idx.size, proportions)
            start = 0
            for client, count in enumerate(counts):
                if count:
                    buckets[client].append(idx[start:start + count])
                start += count
        partition = [np.sort(np.concatenate(b)) if b else np.array([], dtype=np.int64)
                     for b in buckets]
        if all(p.size > 0 for p in partition):
            return partition
    raise ConfigError(
        f"could not draw a partition without empty clients in "
        f"{MAX_PARTITION_ATTEMPTS} attempts (alpha={alpha}, clients={num_clients})")


def batch_indices(num_samples: int, batch_size: int,
                  rng: np.random.Generator) -> list[np.ndarray]:
    """Shuffled mini-batch index arrays covering all samples.

    The final partial batch is included, so ceil(N / B) batches total.
    """
    if batch_size < 1:
        raise ConfigError("batch size must be positive")
    order = rng.permutation(num_samples)
    return [order[i:i + batch_size] for i in range(0, num_samples, batch_size)]


def load_csv(path: str) -> tuple[np.ndarray, np.ndarray]:
    """Read a dataset file: header row, float feature columns, int label last.

    Returns (inputs, labels); splitting is the caller's concern.
    """
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ConfigError(f"{path}: empty csv file")
        width = len(header)
        if width < 2:
            raise ConfigError(f"{path}: need at least one feature column and a label")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != width:
                raise ConfigError(f"{path}:{lineno}: expected {width} columns, got {len(row)}")
            try:
                features = [float(v) for v in row[:-1]]
                label = int(row[-1])
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: {exc}") from exc
            rows.append((features, label))
    if not rows:
        raise ConfigError(f"{path}: no data rows")
    inputs = np.array([r[0] for r in rows], dtype=np.float64)
    labels = np.array([r[1] for r in rows], dtype=np.int64)
    if labels.min() < 0:
        raise ConfigError(f"{path}: labels must be non-negative")
    return inputs, labels


def split_dataset(inputs: np.ndarray, labels: np.ndarray,
                  seed: int) -> tuple[LabeledDataset, LabeledDataset]:
    """Class-stratified 80/20 split of an externally loaded dataset."""
    train_idx, test_idx = [], []
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        if idx.size < 2:
            raise ConfigError(f"class {c} has fewer than 2 samples; cannot split")
        idx = rng_for(seed, "csv-split", int(c)).permutation(idx)
        n_train, _ = _train_test_counts(idx.size)
        train_idx.append(idx[:n_train])
        test_idx.append(idx[n_train:])
    tr = np.concatenate(train_idx)
    te = np.concatenate(test_idx)
    tr = tr[rng_for(seed, "csv-shuffle", "train").permutation(tr.size)]
    te = te[rng_for(seed, "csv-shuffle", "test").permutation(te.size)]
    return (LabeledDataset(inputs[tr], labels[tr], "train"),
            LabeledDataset(inputs[te], labels[te], "test"))
