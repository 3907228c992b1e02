"""CSV ingestion, standardization, splits and minibatches."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

LABEL_KINDS = ("real", "binary01", "pm1")


class DataFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    name: str = ""
    feature_means: np.ndarray = field(default=None, repr=False)
    feature_stds: np.ndarray = field(default=None, repr=False)
    target_mean: float = 0.0
    target_std: float = 1.0
    label_kind: str = "real"

    def __post_init__(self):
        if self.X.ndim != 2 or self.X.shape[0] != self.y.shape[0]:
            raise ValueError(f"inconsistent shapes X={self.X.shape} y={self.y.shape}")
        if np.isnan(self.X).any() or np.isnan(self.y).any():
            raise ValueError("dataset contains NaN")
        d = self.X.shape[1]
        if self.feature_means is None:
            object.__setattr__(self, "feature_means", np.zeros(d))
        if self.feature_stds is None:
            object.__setattr__(self, "feature_stds", np.ones(d))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def is_classification(self) -> bool:
        return self.label_kind != "real"

    def destandardize_X(self, X):
        return np.asarray(X) * self.feature_stds + self.feature_means

    def destandardize_y(self, y):
        return np.asarray(y) * self.target_std + self.target_mean


@dataclass(frozen=True)
class Split:
    train_indices: np.ndarray
    test_indices: np.ndarray

    def __post_init__(self):
        if np.intersect1d(self.train_indices, self.test_indices).size:
            raise ValueError("train and test indices overlap")


def _parse_float(cell, lineno, col):
    try:
        return float(cell)
    except ValueError:
        raise DataFormatError(f"line {lineno}: non-numeric value {cell!r} in column {col!r}") from None


def load_csv(path, target_column: str, label_kind: str = "real", name: str | None = None) -> Dataset:
    """Read a comma-separated numeric table with one header row.

    ``label_kind`` is ``"real"`` for regression targets, ``"binary01"`` for
    {0, 1} labels and ``"pm1"`` for {-1, +1} labels; both label kinds are
    mapped to {-1, +1}.
    """
    if label_kind not in LABEL_KINDS:
        raise ValueError(f"unknown label_kind {label_kind!r}; expected one of {LABEL_KINDS}")
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataFormatError(f"{path}: file is empty") from None
        if target_column not in header:
            raise DataFormatError(f"{path}: target column {target_column!r} not in header {header}")
        t = header.index(target_column)
        rows, labels = [], []
        for row in reader:
            lineno = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataFormatError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
            vals = [_parse_float(c, lineno, header[j]) for j, c in enumerate(row)]
            y = vals.pop(t)
            if label_kind == "binary01":
                if y not in (0.0, 1.0):
                    raise DataFormatError(f"line {lineno}: label {row[t]!r} is not 0 or 1")
                y = 2.0 * y - 1.0
            elif label_kind == "pm1" and y not in (-1.0, 1.0):
                raise DataFormatError(f"line {lineno}: label {row[t]!r} is not -1 or +1")
            rows.append(vals)
            labels.append(y)
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    return Dataset(np.array(rows), np.array(labels), name or path.stem, label_kind=label_kind)


def standardize(ds: Dataset, train_idx) -> Dataset:
    """Scale features, and real-valued targets, by training-split statistics."""
    train_idx = np.asarray(train_idx, dtype=int)
    if train_idx.size == 0:
        raise ValueError("train_idx is empty")
    Xtr = ds.X[train_idx]
    mu = Xtr.mean(axis=0)
    sd = Xtr.std(axis=0)
    const = sd <= 1e-12 * np.maximum(1.0, np.abs(mu))
    sd = np.where(const, 1.0, sd)
    mu = np.where(const, 0.0, mu)
    X = (ds.X - mu) / sd
    y, ym, ys = ds.y, 0.0, 1.0
    if not ds.is_classification:
        ym = float(ds.y[train_idx].mean())
        ys = float(ds.y[train_idx].std()) or 1.0
        y = (ds.y - ym) / ys
    return replace(ds, X=X, y=y, feature_means=mu, feature_stds=sd, target_mean=ym, target_std=ys)


def make_splits(ds: Dataset, n_splits: int = 20, train_count: int | None = None,
                train_fraction: float | None = None, seed: int = 0) -> list[Split]:
    """Seeded random train/test partitions of the full index set."""
    N = ds.n
    if train_count is None:
        if train_fraction is None:
            raise ValueError("give train_count or train_fraction")
        train_count = int(round(train_fraction * N))
    if not 0 < train_count < N:
        raise ValueError(f"train_count must be in (0, {N}), got {train_count}")
    rng = np.random.default_rng(seed)
    splits = []
    for _ in range(n_splits):
        perm = rng.permutation(N)
        splits.append(Split(np.sort(perm[:train_count]), np.sort(perm[train_count:])))
    return splits


def minibatches(ds: Dataset, split: Split, batch_size: int = 32, rng: np.random.Generator | None = None):
    """Endless stream of minibatches of training indices, reshuffled each epoch.

    The last batch of an epoch may be short.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be at least 1")
    rng = np.random.default_rng() if rng is None else rng
    idx = np.asarray(split.train_indices)
    while True:
        perm = rng.permutation(idx)
        for start in range(0, perm.size, batch_size):
            yield perm[start:start + batch_size]


def synthetic_regression(n: int = 200, in_dim: int = 1, noise: float = 0.1, seed: int = 0) -> Dataset:
    """Smooth 1-D-style regression problem ``y = sin(3 x_1) + 0.5 x_1 + noise``."""
    rng = np.random.default_rng(seed)
    X = rng.uniform(-2.0, 2.0, size=(n, in_dim))
    y = np.sin(3.0 * X[:, 0]) + 0.5 * X[:, 0] + noise * rng.standard_normal(n)
    return Dataset(X, y, "synthetic-regression")


def synthetic_classification(n: int = 300, in_dim: int = 2, seed: int = 0) -> Dataset:
    """Two overlapping Gaussian blobs with labels in {-1, +1}."""
    rng = np.random.default_rng(seed)
    y = rng.choice((-1.0, 1.0), size=n)
    X = rng.standard_normal((n, in_dim)) + 1.0 * y[:, None]
    return Dataset(X, y, "synthetic-classification", label_kind="pm1")
