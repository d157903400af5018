"""Missing-modality reconstruction through a common standardized space.

Available modalities are standardized by their own per-sample Gaussian
estimates, summed into a shared code, and decoded by a per-modality
transposed-convolution decoder. The sum makes the code exactly
order-invariant in the available set.
"""
from __future__ import annotations

import numpy as np

from .encoders import VAR_FLOOR, FeatureGaussian
from .numerics import (
    Module,
    ShapeError,
    Tensor,
    conv_transpose1d,
    reciprocal,
    relu,
    reshape,
    sqrt,
    square,
    transpose,
    uniform_init,
)

_DEC_CHANNELS = 8


def normalize_available(z, gaussian: FeatureGaussian):
    """Standardize features elementwise with the modality's own Gaussian."""
    if float(gaussian.variance.data.min()) < VAR_FLOOR:
        raise ValueError(
            f"variance below floor {VAR_FLOOR}: {float(gaussian.variance.data.min())}"
        )
    return (z - gaussian.mean) * reciprocal(sqrt(gaussian.variance))


class ModalityDecoder(Module):
    """Four transposed-convolution blocks over the reshaped common code."""

    def __init__(self, rng, dim):
        if dim % _DEC_CHANNELS != 0:
            raise ShapeError(f"decoder needs dim divisible by {_DEC_CHANNELS}, got {dim}")
        self.dim = dim
        self.length = dim // _DEC_CHANNELS
        c = _DEC_CHANNELS
        self.ws = [Tensor(uniform_init(rng, (c, c, 3), c * 3), requires_grad=True)
                   for _ in range(4)]
        self.bs = [Tensor(np.zeros(c), requires_grad=True) for _ in range(4)]

    def __call__(self, u):
        h = transpose(reshape(u, (u.shape[0], self.length, _DEC_CHANNELS)), (0, 2, 1))
        for i in range(4):
            h = conv_transpose1d(h, self.ws[i], self.bs[i], padding=1)
            if i < 3:
                h = relu(h)
        return reshape(transpose(h, (0, 2, 1)), (u.shape[0], self.dim))


def common_code(z_list, gaussians, available, skip, normalized=True, average=False,
                need=None):
    """Sum the standardized features of available modalities (excluding skip).

    available: (B, M) 0/1 array. Rows flagged in `need` (default: all) must
    have at least one available source or the sample is rejected.
    """
    b = z_list[0].shape[0]
    m = len(z_list)
    counts = np.zeros(b)
    u = None
    for j in range(m):
        if j == skip:
            continue
        col = available[:, j].astype(float)
        counts += col
        feat = normalize_available(z_list[j], gaussians[j]) if normalized else z_list[j]
        term = feat * Tensor(col.reshape(b, 1))
        u = term if u is None else u + term
    needed = np.ones(b, dtype=bool) if need is None else np.asarray(need, dtype=bool)
    starved = needed & (counts == 0)
    if u is None or starved.any():
        bad = int(np.argmax(starved)) if u is not None else 0
        raise ValueError(f"sample {bad}: no available modality to reconstruct from")
    if average:
        u = u * Tensor((1.0 / np.maximum(counts, 1.0)).reshape(b, 1))
    return u


def reconstruct(missing_id, z_list, gaussians, available, decoder,
                normalized=True, average=False, need=None):
    """Decode features for one missing modality from the others."""
    u = common_code(z_list, gaussians, available, skip=missing_id,
                    normalized=normalized, average=average, need=need)
    return decoder(u)


def recover_loss(z_hat, z_true):
    """Squared L2 distance between recovered and true features, summed."""
    d = z_hat - z_true
    return square(d).sum()
