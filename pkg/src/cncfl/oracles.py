"""Independent reference computations used by ``oracle-check`` and the tests."""

from __future__ import annotations

import numpy as np

from .model import ParamVector, forward_loss

FD_STEP = 1e-5


def finite_difference_gradient(params: ParamVector, features, labels, step: float = FD_STEP) -> np.ndarray:
    """Central differences of the mean loss, one coordinate at a time."""
    base = params.values
    out = np.empty_like(base)
    for i in range(base.size):
        up = base.copy()
        up[i] += step
        down = base.copy()
        down[i] -= step
        out[i] = (forward_loss(params.replace(up), features, labels)
                  - forward_loss(params.replace(down), features, labels)) / (2 * step)
    return out


def max_relative_error(a, b, floor: float = 1e-6) -> float:
    """``max |a-b| / max(|a|, |b|, floor)``; the floor keeps near-zero coordinates meaningful."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0


def scalar_cross_entropy(params: ParamVector, features, labels) -> float:
    """Loop-by-loop mean cross-entropy, sharing no code with the vectorized path."""
    blocks = params.blocks()
    x = np.asarray(features, dtype=np.float64)
    total = 0.0
    for row, label in zip(x, labels):
        if params.hidden is None:
            w, b = blocks["W"], blocks["b"]
            z = [sum(w[c, j] * row[j] for j in range(len(row))) + b[c, 0] for c in range(w.shape[0])]
        else:
            w1, b1, w2, b2 = blocks["W1"], blocks["b1"], blocks["W2"], blocks["b2"]
            h = [np.tanh(sum(w1[k, j] * row[j] for j in range(len(row))) + b1[k, 0])
                 for k in range(w1.shape[0])]
            z = [sum(w2[c, k] * h[k] for k in range(len(h))) + b2[c, 0] for c in range(w2.shape[0])]
        zmax = max(z)
        log_norm = zmax + np.log(sum(np.exp(v - zmax) for v in z))
        total += log_norm - z[int(label)]
    return total / len(x)
