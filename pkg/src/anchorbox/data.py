"""CSV ingestion, standardization and the synthetic Gaussian-cluster generator."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Box


class DataError(ValueError):
    pass


@dataclass
class Dataset:
    X: np.ndarray  # standardized rows, n x D
    y: np.ndarray
    feature_names: list
    mean: np.ndarray
    std: np.ndarray
    label_name: str = "label"
    meta: dict = field(default_factory=dict)

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def dim(self):
        return self.X.shape[1]

    def raw(self) -> np.ndarray:
        return destandardize(self.X, self.mean, self.std)


def fit_standardization(X):
    X = np.asarray(X, dtype=np.float64)
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    return mean, std


def standardize(X, mean, std, names=None):
    std = np.asarray(std, dtype=np.float64)
    if np.any(std == 0):
        j = int(np.flatnonzero(std == 0)[0])
        name = names[j] if names is not None else str(j)
        raise DataError(f"feature {name!r} is constant; remove the column before loading")
    return (np.asarray(X, dtype=np.float64) - mean) / std


def destandardize(Z, mean, std):
    return np.asarray(Z, dtype=np.float64) * std + mean


def binarize_median(y) -> np.ndarray:
    """1 where y >= median(y), else 0."""
    y = np.asarray(y, dtype=np.float64)
    return (y >= np.median(y)).astype(np.int64)


def from_arrays(X, y, feature_names=None, label_name="label") -> Dataset:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise DataError(f"need a non-empty n x D matrix, got shape {X.shape}")
    names = list(feature_names) if feature_names is not None else [f"x{j}" for j in range(X.shape[1])]
    mean, std = fit_standardization(X)
    if X.shape[0] == 1:
        std = np.ones_like(std)  # a single row cannot be scaled
    Z = standardize(X, mean, std, names)
    return Dataset(Z, np.asarray(y), names, mean, std, label_name)


def load_csv(path, label_column: str, binarize: bool = False) -> Dataset:
    """Read a numeric CSV with a header row; the label column is split off.

    ``binarize`` maps a real-valued label to {0, 1} at its median.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if label_column not in header:
        raise DataError(f"{path}: label column {label_column!r} not found in header {header}")
    li = header.index(label_column)
    body = [r for r in rows[1:] if r]
    if not body:
        raise DataError(f"{path}: no data rows")
    values = np.empty((len(body), len(header)))
    for i, r in enumerate(body, start=2):
        if len(r) != len(header):
            raise DataError(f"{path}: row {i} has {len(r)} cells, header has {len(header)}")
        for j, cell in enumerate(r):
            try:
                v = float(cell)
            except ValueError:
                raise DataError(f"{path}: row {i}, column {header[j]!r}: "
                                f"non-numeric value {cell!r}") from None
            if not math.isfinite(v):
                raise DataError(f"{path}: row {i}, column {header[j]!r}: non-finite value {cell!r}")
            values[i - 2, j] = v
    y = values[:, li]
    X = np.delete(values, li, axis=1)
    names = [h for j, h in enumerate(header) if j != li]
    if binarize:
        y = binarize_median(y)
    elif np.all(y == np.round(y)):
        y = y.astype(np.int64)
    ds = from_arrays(X, y, names, label_column)
    ds.meta["source"] = str(path)
    return ds


def data_bounding_box(d) -> Box:
    X = d.X if isinstance(d, Dataset) else np.asarray(d, dtype=np.float64)
    if len(X) == 0:
        raise DataError("cannot bound an empty dataset")
    return Box(X.min(axis=0), X.max(axis=0))


@dataclass(frozen=True)
class ClusterSpec:
    n_clusters: int = 5
    cluster_size: int = 100
    std_low: float = 0.3
    std_high: float = 1.0


def generate_clusters(D: int, rng, spec: ClusterSpec = ClusterSpec()):
    """Gaussian clusters with N(0, 1) means and U(std_low, std_high) diagonal stds.

    Returns (dataset, assignments); the label of a point is its cluster id and
    the generating parameters are kept in ``dataset.meta``.
    """
    if D < 1:
        raise ValueError("D must be >= 1")
    means = rng.standard_normal((spec.n_clusters, D))
    stds = rng.uniform(spec.std_low, spec.std_high, size=(spec.n_clusters, D))
    parts = [means[c] + stds[c] * rng.standard_normal((spec.cluster_size, D))
             for c in range(spec.n_clusters)]
    X = np.concatenate(parts)
    ids = np.repeat(np.arange(spec.n_clusters), spec.cluster_size)
    ds = from_arrays(X, ids)
    ds.meta.update(means=means, stds=stds)
    return ds, ids


def cluster_coverage(region, points, assignments, anchor_cluster) -> float:
    """Fraction of the anchor's cluster lying in ``region`` (anything with contains_many)."""
    assignments = np.asarray(assignments)
    members = np.asarray(points)[assignments == anchor_cluster]
    if len(members) == 0:
        raise DataError(f"cluster {anchor_cluster} is empty")
    return float(np.mean(region.contains_many(members)))


def train_test_split(n: int, rng, test_fraction: float = 0.2):
    perm = rng.permutation(n)
    n_test = max(1, int(round(test_fraction * n)))
    return np.sort(perm[n_test:]), np.sort(perm[:n_test])


def generate_signal_dataset(n: int, D: int, k: int, rng, noise: float = 0.3):
    """Binary labels driven by feature k only: y = 1 iff x_k + noise * eps > 0."""
    if not 0 <= k < D:
        raise ValueError(f"feature {k} out of range for D={D}")
    X = rng.standard_normal((n, D))
    y = (X[:, k] + noise * rng.standard_normal(n) > 0).astype(np.int64)
    ds = from_arrays(X, y)
    ds.meta["signal_feature"] = k
    return ds
