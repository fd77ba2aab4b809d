"""Dataset loading, normalization, partitioning, and synthesis.

Binary classification data: labels are mapped to {-1, +1} at load time
({-1,+1} kept, {0,1} maps 0 to -1, {1,2} maps 1 to -1; anything else is an
error). Feature rows are scaled to unit norm by ``normalize_rows`` before
partitioning so the local models' smoothness bound holds.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .oracle import LogisticModel


class DataFormatError(ValueError):
    pass


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    name: str = ""

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.labels = np.asarray(self.labels, dtype=float)
        if self.features.ndim != 2:
            raise DataFormatError(f"features must be 2-d, got shape {self.features.shape}")
        if self.labels.shape != (self.features.shape[0],):
            raise DataFormatError(
                f"labels shape {self.labels.shape} does not match "
                f"{self.features.shape[0]} feature rows"
            )

    @property
    def num_samples(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


def _map_labels(raw: np.ndarray, where: str) -> np.ndarray:
    values = set(np.unique(raw).tolist())
    if values <= {-1.0, 1.0}:
        return raw.astype(float)
    if values <= {0.0, 1.0}:
        return np.where(raw == 0.0, -1.0, 1.0)
    if values <= {1.0, 2.0}:
        return np.where(raw == 1.0, -1.0, 1.0)
    raise DataFormatError(
        f"{where}: cannot map label set {sorted(values)} to -1/+1 "
        "(supported: {-1,+1}, {0,1}, {1,2})"
    )


def _load_libsvm(path: str) -> Dataset:
    labels: list[float] = []
    rows: list[list[tuple[int, float]]] = []
    dim = 0
    with open(path) as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            try:
                labels.append(float(parts[0]))
            except ValueError:
                raise DataFormatError(f"{path}: line {lineno}: bad label {parts[0]!r}")
            entries = []
            for token in parts[1:]:
                idx_str, _, val_str = token.partition(":")
                try:
                    idx = int(idx_str)
                    val = float(val_str)
                except ValueError:
                    raise DataFormatError(
                        f"{path}: line {lineno}: bad index:value pair {token!r}"
                    )
                if idx < 1:
                    raise DataFormatError(
                        f"{path}: line {lineno}: indices are 1-based, got {idx}"
                    )
                entries.append((idx, val))
                dim = max(dim, idx)
            rows.append(entries)
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    features = np.zeros((len(rows), dim))
    for i, entries in enumerate(rows):
        for idx, val in entries:
            features[i, idx - 1] = val
    return Dataset(features, _map_labels(np.array(labels), path), name=path)


def _load_csv(path: str) -> Dataset:
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: empty file")
        if not header or header[0] != "label":
            raise DataFormatError(f"{path}: first column must be named 'label'")
        width = len(header)
        labels = []
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise DataFormatError(
                    f"{path}: line {lineno}: expected {width} fields, found {len(row)}"
                )
            try:
                labels.append(float(row[0]))
                rows.append([float(v) for v in row[1:]])
            except ValueError as exc:
                raise DataFormatError(f"{path}: line {lineno}: {exc}")
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    return Dataset(np.array(rows), _map_labels(np.array(labels), path), name=path)


def load_dataset(path: str, fmt: str = "libsvm") -> Dataset:
    """Read a dataset file. ``fmt`` is 'libsvm' (1-based sparse index:value
    pairs) or 'csv' (header row, first column 'label')."""
    if fmt == "libsvm":
        return _load_libsvm(path)
    if fmt == "csv":
        return _load_csv(path)
    raise DataFormatError(f"unknown format {fmt!r}; expected 'libsvm' or 'csv'")


def save_csv(dataset: Dataset, path: str) -> None:
    """Write a dataset as csv with full float precision (round-trips exactly)."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["label"] + [f"f{k}" for k in range(1, dataset.dim + 1)])
        for label, row in zip(dataset.labels, dataset.features):
            writer.writerow([repr(float(label))] + [repr(float(v)) for v in row])


def normalize_rows(dataset: Dataset) -> Dataset:
    """Scale every feature row to unit norm. Zero rows cannot be scaled and
    are a data error."""
    norms = np.linalg.norm(dataset.features, axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise DataFormatError(
            f"{dataset.name or 'dataset'}: row {zero[0]} has zero norm, cannot normalize"
        )
    return Dataset(dataset.features / norms[:, None], dataset.labels.copy(), dataset.name)


def partition_uniform(
    dataset: Dataset, n: int, seed: int, reg_coeff: float = 1e-4
) -> list[LogisticModel]:
    """Split a dataset into n local models: seeded shuffle, then contiguous
    shards; the first (N mod n) shards take one extra sample."""
    if n < 1:
        raise DataFormatError(f"need at least one node, got n={n}")
    if dataset.num_samples < n:
        raise DataFormatError(
            f"cannot split {dataset.num_samples} samples across {n} nodes"
        )
    perm = np.random.default_rng(seed).permutation(dataset.num_samples)
    base, extra = divmod(dataset.num_samples, n)
    models = []
    start = 0
    for node in range(n):
        size = base + (1 if node < extra else 0)
        shard = perm[start : start + size]
        start += size
        models.append(
            LogisticModel(
                dataset.features[shard],
                dataset.labels[shard],
                reg_coeff=reg_coeff,
                node_id=node,
            )
        )
    return models


def synthesize_logistic(
    n: int,
    samples_per_node: int,
    dim: int,
    separation: float,
    seed: int,
    reg_coeff: float = 1e-4,
) -> list[LogisticModel]:
    """Generate n local logistic models around a shared direction.

    Each node draws balanced labels and features label * separation * u +
    standard normal noise, then rows are normalized. separation = 0 makes the
    classes indistinguishable in the mean.
    """
    if samples_per_node < 2:
        raise DataFormatError("samples_per_node must be >= 2")
    rng = np.random.default_rng(seed)
    direction = rng.standard_normal(dim)
    direction /= np.linalg.norm(direction)
    models = []
    for node in range(n):
        labels = np.where(np.arange(samples_per_node) % 2 == 0, 1.0, -1.0)
        feats = separation * labels[:, None] * direction[None, :]
        feats = feats + rng.standard_normal((samples_per_node, dim))
        feats /= np.linalg.norm(feats, axis=1, keepdims=True)
        models.append(LogisticModel(feats, labels, reg_coeff=reg_coeff, node_id=node))
    return models
