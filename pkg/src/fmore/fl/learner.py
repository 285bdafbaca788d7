"""Small numpy learners with flat parameter vectors, plus FedAvg primitives."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .data import Dataset

logger = logging.getLogger(__name__)


def _softmax_xent(logits: np.ndarray, y: np.ndarray):
    z = logits - logits.max(axis=1, keepdims=True)
    p = np.exp(z)
    p /= p.sum(axis=1, keepdims=True)
    n = len(y)
    loss = -np.log(np.maximum(p[np.arange(n), y], 1e-300)).mean()
    dlogits = p
    dlogits[np.arange(n), y] -= 1.0
    return loss, dlogits / n


class SoftmaxRegression:
    """Multinomial logistic regression; params = [W (d x C) row-major, b (C)]."""

    name = "softmax"

    def __init__(self, n_features: int, n_classes: int, init_scale: float = 0.0):
        self.d = n_features
        self.c = n_classes
        self.init_scale = init_scale

    @property
    def n_params(self) -> int:
        return self.d * self.c + self.c

    def init(self, rng: np.random.Generator) -> np.ndarray:
        # zero init makes accuracy after one step independent of the step size
        w = np.zeros(self.n_params)
        if self.init_scale > 0:
            w[: self.d * self.c] = rng.normal(0.0, self.init_scale, size=self.d * self.c)
        return w

    def _unpack(self, w):
        return w[: self.d * self.c].reshape(self.d, self.c), w[self.d * self.c:]

    def logits(self, w, X):
        W, b = self._unpack(w)
        return X @ W + b

    def loss_grad(self, w, X, y):
        W, b = self._unpack(w)
        loss, dl = _softmax_xent(X @ W + b, y)
        return loss, np.concatenate([(X.T @ dl).ravel(), dl.sum(axis=0)])


class MLP:
    """One hidden tanh layer; params = [W1, b1, W2, b2] flattened."""

    name = "mlp"

    def __init__(self, n_features: int, n_classes: int, hidden: int = 64):
        self.d = n_features
        self.c = n_classes
        self.h = hidden
        self._shapes = [(n_features, hidden), (hidden,), (hidden, n_classes), (n_classes,)]

    @property
    def n_params(self) -> int:
        return sum(int(np.prod(s)) for s in self._shapes)

    def init(self, rng: np.random.Generator) -> np.ndarray:
        W1 = rng.normal(0, 1 / np.sqrt(self.d), size=(self.d, self.h))
        W2 = rng.normal(0, 1 / np.sqrt(self.h), size=(self.h, self.c))
        return np.concatenate([W1.ravel(), np.zeros(self.h), W2.ravel(), np.zeros(self.c)])

    def _unpack(self, w):
        out, i = [], 0
        for s in self._shapes:
            n = int(np.prod(s))
            out.append(w[i:i + n].reshape(s))
            i += n
        return out

    def logits(self, w, X):
        W1, b1, W2, b2 = self._unpack(w)
        return np.tanh(X @ W1 + b1) @ W2 + b2

    def loss_grad(self, w, X, y):
        W1, b1, W2, b2 = self._unpack(w)
        a = np.tanh(X @ W1 + b1)
        loss, dl = _softmax_xent(a @ W2 + b2, y)
        da = (dl @ W2.T) * (1 - a ** 2)
        return loss, np.concatenate([(X.T @ da).ravel(), da.sum(axis=0), (a.T @ dl).ravel(), dl.sum(axis=0)])


def make_learner(name: str, n_features: int, n_classes: int, hidden: int = 64, init_scale: float = 0.0):
    if name == "softmax":
        return SoftmaxRegression(n_features, n_classes, init_scale)
    if name == "mlp":
        return MLP(n_features, n_classes, hidden)
    raise ValueError(f"unknown learner {name!r}")


def evaluate(learner, w: np.ndarray, data: Dataset) -> tuple[float, float]:
    """(accuracy, mean cross-entropy) on ``data``."""
    logits = learner.logits(w, data.X)
    loss, _ = _softmax_xent(logits, data.y)
    acc = float((logits.argmax(axis=1) == data.y).mean())
    return acc, float(loss)


@dataclass
class LocalResult:
    params: np.ndarray
    empty: bool = False


def local_train(learner, w: np.ndarray, data: Dataset, lr: float, epochs: int,
                batch_size: Optional[int] = None, rng: Optional[np.random.Generator] = None) -> LocalResult:
    """Gradient descent on the offered local subset.

    ``batch_size=None`` gives ``epochs`` full-batch steps; otherwise each epoch
    is one shuffled pass of mini-batches (``rng`` required).
    """
    if len(data) == 0:
        logger.warning("empty local dataset; returning global parameters unchanged")
        return LocalResult(w.copy(), empty=True)
    w = w.copy()
    for _ in range(epochs):
        if batch_size is None or batch_size >= len(data):
            _, g = learner.loss_grad(w, data.X, data.y)
            w -= lr * g
            continue
        perm = rng.permutation(len(data))
        for start in range(0, len(data), batch_size):
            idx = perm[start:start + batch_size]
            _, g = learner.loss_grad(w, data.X[idx], data.y[idx])
            w -= lr * g
    if not np.all(np.isfinite(w)):
        raise FloatingPointError("local update produced non-finite parameters")
    return LocalResult(w)


def aggregate(updates: Sequence[tuple[object, np.ndarray, float]]) -> np.ndarray:
    """Data-size weighted average of ``(node_id, params, D_i)`` updates."""
    if not updates:
        raise ValueError("need at least one update")
    shapes = {u[1].shape for u in updates}
    if len(shapes) != 1:
        raise ValueError(f"parameter shapes differ: {shapes}")
    # deterministic regardless of arrival order
    ups = sorted(updates, key=lambda u: str(u[0]))
    weights = np.array([float(u[2]) for u in ups])
    if np.any(weights < 0) or weights.sum() <= 0:
        raise ValueError("data sizes must be non-negative with a positive total")
    stacked = np.stack([u[1] for u in ups])
    return (weights[:, None] * stacked).sum(axis=0) / weights.sum()
