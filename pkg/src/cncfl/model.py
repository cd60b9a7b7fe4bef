"""Softmax-regression classifier (optionally with one tanh hidden layer).

Parameters live in one flat float64 vector so that aggregation, chain passing
and payload sizing work on a single array. ``dtype_bytes`` describes the
wire size of a scalar, not the in-memory precision.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidInputError

MB = 2**20

Layout = tuple[tuple[str, int, int], ...]


@dataclass(frozen=True)
class ParamVector:
    values: np.ndarray
    layout: Layout
    dtype_bytes: int = 4

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.float64).reshape(-1)
        layout = tuple((str(name), int(r), int(c)) for name, r, c in self.layout)
        expected = sum(r * c for _, r, c in layout)
        if values.size != expected:
            raise InvalidInputError(f"{values.size} values do not fill layout of {expected} scalars")
        if not np.all(np.isfinite(values)):
            raise InvalidInputError("parameters contain NaN or Inf")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "layout", layout)

    def __len__(self) -> int:
        return self.values.size

    def blocks(self) -> dict[str, np.ndarray]:
        """Read-only 2-D views of each layer block, keyed by name."""
        out = {}
        offset = 0
        for name, rows, cols in self.layout:
            out[name] = self.values[offset : offset + rows * cols].reshape(rows, cols)
            offset += rows * cols
        return out

    @property
    def hidden(self) -> int | None:
        return self.layout[0][1] if len(self.layout) == 4 else None

    @property
    def input_dim(self) -> int:
        return self.layout[0][2]

    @property
    def num_classes(self) -> int:
        return self.layout[-1][1]

    def replace(self, values: np.ndarray) -> ParamVector:
        return ParamVector(values, self.layout, self.dtype_bytes)


GradVector = ParamVector


@dataclass(frozen=True)
class Hyperparams:
    lr: float = 0.01
    batch_size: int = 10
    local_epochs: int = 1

    def __post_init__(self) -> None:
        if not self.lr >= 0 or not np.isfinite(self.lr):
            raise InvalidInputError(f"lr must be >= 0, got {self.lr}")
        if self.batch_size < 1:
            raise InvalidInputError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.local_epochs < 1:
            raise InvalidInputError(f"local_epochs must be >= 1, got {self.local_epochs}")


def init_model(seed: int, input_dim: int, num_classes: int, hidden: int | None = None) -> ParamVector:
    if input_dim < 1:
        raise InvalidInputError(f"input_dim must be >= 1, got {input_dim}")
    if num_classes < 2:
        raise InvalidInputError(f"num_classes must be >= 2, got {num_classes}")
    if hidden is not None and hidden < 1:
        raise InvalidInputError("hidden must be a positive width; pass None for no hidden layer")

    rng = np.random.default_rng(seed)
    if hidden is None:
        layout: Layout = (("W", num_classes, input_dim), ("b", num_classes, 1))
    else:
        layout = (
            ("W1", hidden, input_dim),
            ("b1", hidden, 1),
            ("W2", num_classes, hidden),
            ("b2", num_classes, 1),
        )
    parts = []
    for name, rows, cols in layout:
        if name.startswith("b"):
            parts.append(np.zeros(rows * cols))
        else:
            parts.append(rng.normal(0.0, 1.0 / np.sqrt(cols), size=rows * cols))
    return ParamVector(np.concatenate(parts), layout)


def _check_batch(params: ParamVector, features, labels) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels)
    if x.ndim == 1:
        x = x.reshape(1, -1)
    if x.ndim != 2 or x.shape[1] != params.input_dim:
        raise InvalidInputError(
            f"feature shape {x.shape} does not match model input_dim {params.input_dim}"
        )
    if y.shape != (x.shape[0],):
        raise InvalidInputError(f"expected {x.shape[0]} labels, got shape {y.shape}")
    if x.shape[0] == 0:
        raise InvalidInputError("empty batch")
    if not np.issubdtype(y.dtype, np.integer):
        raise InvalidInputError("labels must be integers")
    if y.min() < 0 or y.max() >= params.num_classes:
        raise InvalidInputError(f"labels outside [0, {params.num_classes})")
    return x, y


def _forward(params: ParamVector, x: np.ndarray):
    blocks = params.blocks()
    if params.hidden is None:
        logits = x @ blocks["W"].T + blocks["b"][:, 0]
        return logits, None
    h = np.tanh(x @ blocks["W1"].T + blocks["b1"][:, 0])
    logits = h @ blocks["W2"].T + blocks["b2"][:, 0]
    return logits, h


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def logits(params: ParamVector, features) -> np.ndarray:
    x = np.asarray(features, dtype=np.float64)
    if x.ndim == 1:
        x = x.reshape(1, -1)
    if x.shape[1] != params.input_dim:
        raise InvalidInputError(
            f"feature shape {x.shape} does not match model input_dim {params.input_dim}"
        )
    return _forward(params, x)[0]


def predict(params: ParamVector, features) -> np.ndarray:
    return np.argmax(logits(params, features), axis=1)


def forward_loss(params: ParamVector, features, labels) -> float:
    """Mean cross-entropy of the batch."""
    x, y = _check_batch(params, features, labels)
    logp = _log_softmax(_forward(params, x)[0])
    return float(-logp[np.arange(y.size), y].mean())


def gradient(params: ParamVector, features, labels) -> GradVector:
    x, y = _check_batch(params, features, labels)
    n = y.size
    z, h = _forward(params, x)
    delta = np.exp(_log_softmax(z))
    delta[np.arange(n), y] -= 1.0
    delta /= n

    if h is None:
        grads = [delta.T @ x, delta.sum(axis=0)]
    else:
        w2 = params.blocks()["W2"]
        dh = (delta @ w2) * (1.0 - h**2)
        grads = [dh.T @ x, dh.sum(axis=0), delta.T @ h, delta.sum(axis=0)]
    return params.replace(np.concatenate([g.reshape(-1) for g in grads]))


def sgd_local_train(params: ParamVector, shard, hyper: Hyperparams, seed: int) -> ParamVector:
    """Mini-batch SGD over ``shard`` for ``hyper.local_epochs`` shuffled passes.

    ``shard`` is anything with ``features`` and ``labels`` arrays. The final
    batch of an epoch may be short; its gradient is the mean over the samples
    it actually holds.
    """
    x = np.asarray(shard.features, dtype=np.float64)
    y = np.asarray(shard.labels)
    n = y.size
    if n == 0:
        raise InvalidInputError("cannot train on an empty shard")
    _check_batch(params, x[:1], y[:1])

    rng = np.random.default_rng(seed)
    w = params
    for _ in range(hyper.local_epochs):
        order = rng.permutation(n)
        for start in range(0, n, hyper.batch_size):
            idx = order[start : start + hyper.batch_size]
            g = gradient(w, x[idx], y[idx])
            w = w.replace(w.values - hyper.lr * g.values)
    return w


def param_size_bytes(params: ParamVector, override_mb: float | None = None) -> int:
    """Payload size of a parameter upload, optionally pinned to ``override_mb`` (1 MB = 2**20 B)."""
    if override_mb is not None:
        return int(round(override_mb * MB))
    return len(params) * params.dtype_bytes


def weighted_average(models: Sequence[ParamVector], weights: Sequence[float]) -> ParamVector:
    if len(models) == 0:
        raise InvalidInputError("nothing to average")
    if len(models) != len(weights):
        raise InvalidInputError(f"{len(models)} models but {len(weights)} weights")
    layout = models[0].layout
    for m in models[1:]:
        if m.layout != layout:
            raise InvalidInputError("cannot average models with different layouts")
    w = np.asarray(weights, dtype=np.float64)
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise InvalidInputError("weights must be finite and non-negative")
    total = w.sum()
    if total <= 0:
        raise InvalidInputError("at least one weight must be positive")
    w = w / total

    out = w[0] * models[0].values
    for wi, m in zip(w[1:], models[1:]):
        out = out + wi * m.values
    return models[0].replace(out)
