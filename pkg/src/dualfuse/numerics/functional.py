"""Composite differentiable functions built from the primitive op set."""
from __future__ import annotations

import numpy as np

from .tensor import (
    Tensor,
    concat,
    reciprocal,
    sqrt,
    square,
    texp,
    tlog,
)


def softmax(x, axis=-1):
    # Shifting by the (constant) row max leaves value and gradient unchanged.
    shift = Tensor(x.data.max(axis=axis, keepdims=True))
    e = texp(x - shift)
    return e * reciprocal(e.sum(axis=axis, keepdims=True))


def log_softmax(x, axis=-1):
    shift = Tensor(x.data.max(axis=axis, keepdims=True))
    s = x - shift
    return s - tlog(texp(s).sum(axis=axis, keepdims=True))


def layer_norm(x, gain=None, bias=None, eps=1e-5):
    """Normalize over the last axis; affine only when gain/bias given."""
    mu = x.mean(axis=-1, keepdims=True)
    c = x - mu
    var = square(c).mean(axis=-1, keepdims=True)
    y = c * reciprocal(sqrt(var + eps))
    if gain is not None:
        y = y * gain + bias
    return y


def l2_norm(x, axis=-1):
    return sqrt(square(x).sum(axis=axis))


def cross_entropy(logits, labels):
    """Per-sample cross-entropy. logits: (B, C) Tensor, labels: (B,) ints."""
    labels = np.asarray(labels)
    n, c = logits.shape
    if labels.shape != (n,):
        raise ValueError(f"labels shape {labels.shape} does not match logits {logits.shape}")
    if labels.min() < 0 or labels.max() >= c:
        raise ValueError(f"label out of range [0, {c}): {labels.min()}..{labels.max()}")
    onehot = np.zeros((n, c))
    onehot[np.arange(n), labels] = 1.0
    return -(log_softmax(logits) * Tensor(onehot)).sum(axis=-1)


def stack_rows(tensors, axis=1):
    """Stack equal-shape (B, D) tensors into (B, len, D) along a new axis."""
    b, d = tensors[0].shape
    return concat([t.reshape(b, 1, d) for t in tensors], axis=axis)
