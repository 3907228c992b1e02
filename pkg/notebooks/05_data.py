# # Data handling
#
# Datasets are numeric CSV tables with a header row. Features, and regression
# targets, are standardized with training-split statistics only.

import tempfile
from pathlib import Path

import numpy as np

from vpflow import load_csv, make_splits, minibatches, standardize

rng = np.random.default_rng(0)

# ## Loading

tmp = Path(tempfile.mkdtemp())
X = rng.normal(5.0, 2.0, size=(50, 3))
labels = (X[:, 0] > 5.0).astype(int)
rows = ["a,b,c,label"] + [f"{x[0]},{x[1]},{x[2]},{t}" for x, t in zip(X, labels)]
(tmp / "toy.csv").write_text("\n".join(rows) + "\n")

ds = load_csv(tmp / "toy.csv", target_column="label", label_kind="binary01")
ds.n, ds.X.shape, np.unique(ds.y)

# ## Splits and standardization
#
# Splits are seeded, so the same seed gives the same partitions.

splits = make_splits(ds, n_splits=5, train_fraction=0.8, seed=0)
sp = splits[0]
std = standardize(ds, sp.train_indices)
print(std.X[sp.train_indices].mean(axis=0).round(12), std.X[sp.train_indices].std(axis=0))

# ## Minibatches
#
# An endless reshuffling stream; each epoch visits every training index once.

stream = minibatches(std, sp, batch_size=16, rng=rng)
epoch = np.concatenate([next(stream) for _ in range(3)])
print(len(epoch), np.array_equal(np.sort(epoch), sp.train_indices))
