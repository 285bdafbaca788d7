"""Synthetic classification data and label-skewed partitioning."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    n_classes: int

    def __len__(self):
        return len(self.y)

    def subset(self, idx) -> "Dataset":
        return Dataset(self.X[idx], self.y[idx], self.n_classes)


def gaussian_mixture(n_samples: int, n_features: int, n_classes: int, separation: float,
                     seed: int) -> Dataset:
    """One isotropic unit-variance Gaussian per class, means ~ N(0, separation^2 I)."""
    rng = np.random.default_rng(seed)
    means = rng.normal(0.0, separation, size=(n_classes, n_features))
    y = np.arange(n_samples) % n_classes
    rng.shuffle(y)
    X = means[y] + rng.normal(size=(n_samples, n_features))
    return Dataset(X, y, n_classes)


def train_test_split(data: Dataset, holdout: float, seed: int) -> tuple[Dataset, Dataset]:
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(data))
    n_test = int(round(holdout * len(data)))
    return data.subset(np.sort(perm[n_test:])), data.subset(np.sort(perm[:n_test]))


def _largest_remainder(weights: np.ndarray, total: int, minimum: int) -> np.ndarray:
    base = np.full(len(weights), minimum)
    rest = total - base.sum()
    share = weights / weights.sum() * rest
    out = base + np.floor(share).astype(int)
    left = total - out.sum()
    out[np.argsort(-(share - np.floor(share)), kind="stable")[:left]] += 1
    return out


def make_non_iid_partition(labels: np.ndarray, n_nodes: int, n_classes: int, shards_per_node,
                           seed: int, size_range: tuple[float, float] = (1.0, 1.0)) -> list[np.ndarray]:
    """Label-shard partition of sample indices.

    Indices are sorted by label and cut into shards; each node gets
    ``shards_per_node`` of them at random (an ``(lo, hi)`` pair draws each
    node's count uniformly from ``lo..hi``). Shard sizes are proportional to
    weights drawn from ``size_range``, so data sizes differ across nodes.
    When there are at least as many shards as classes every shard stays
    inside one class, so a node holds at most as many labels as shards.
    """
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    if np.ndim(shards_per_node) == 0:
        counts_per_node = np.full(n_nodes, int(shards_per_node))
    else:
        lo_s, hi_s = (int(v) for v in shards_per_node)
        if not 1 <= lo_s <= hi_s:
            raise ValueError("shard count range needs 1 <= lo <= hi")
        counts_per_node = rng.integers(lo_s, hi_s + 1, size=n_nodes)
    if np.any(counts_per_node < 1):
        raise ValueError("every node needs at least one shard")
    n_shards = int(counts_per_node.sum())
    if len(labels) < n_shards:
        raise ValueError(f"{len(labels)} samples cannot fill {n_shards} shards")
    order = np.argsort(labels, kind="stable")
    lo, hi = size_range
    weights = rng.uniform(lo, hi, size=n_shards) if hi > lo else np.ones(n_shards)

    if n_shards >= n_classes:
        counts = np.bincount(labels, minlength=n_classes)
        present = np.flatnonzero(counts)
        per_class = _largest_remainder(counts[present].astype(float), n_shards, 1)
        shards, w0 = [], 0
        for cls, n_sh in zip(present, per_class):
            members = order[labels[order] == cls]
            w = weights[w0:w0 + n_sh]
            w0 += n_sh
            sizes = _largest_remainder(w, len(members), 1)
            shards.extend(np.split(members, np.cumsum(sizes)[:-1]))
    else:
        sizes = _largest_remainder(weights, len(labels), 1)
        shards = np.split(order, np.cumsum(sizes)[:-1])

    assignment = np.split(rng.permutation(n_shards), np.cumsum(counts_per_node)[:-1])
    return [np.sort(np.concatenate([shards[s] for s in row])) for row in assignment]
