"""Per-modality feature encoders with probabilistic uncertainty heads.

Each modality owns a trunk producing a D-dimensional feature z, a
Gaussian head estimating a per-sample (mean, variance) for the current
feature, and a recurrent head estimating a temporal Gaussian over the
trailing feature sequence. Input uncertainty r and fluctuation
uncertainty s are the L2 norms of the two variance vectors.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import (
    Linear,
    Module,
    ShapeError,
    Tensor,
    conv1d,
    l2_norm,
    relu,
    sigmoid,
    softplus,
    tanh,
    transpose,
    uniform_init,
)

VAR_FLOOR = 1e-6

# softplus(x) == 1 at this bias, so variance heads start near unit variance
_UNIT_VAR_BIAS = float(np.log(np.e - 1.0))


@dataclass
class FeatureGaussian:
    mean: Tensor
    variance: Tensor  # strictly positive, floored at VAR_FLOOR


def input_uncertainty(gaussian: FeatureGaussian) -> Tensor:
    """Aggregate the variance vector into a single nonnegative scalar per row."""
    return l2_norm(gaussian.variance, axis=-1)


class ConvTrunk(Module):
    """Two strided 1-d convolutions, global average pool, linear projection."""

    def __init__(self, rng, window, channels, dim, hidden=(16, 32), kernel=5):
        self.window = window
        self.channels = channels
        c1, c2 = hidden
        self.w1 = Tensor(uniform_init(rng, (c1, channels, kernel), channels * kernel),
                         requires_grad=True)
        self.b1 = Tensor(np.zeros(c1), requires_grad=True)
        self.w2 = Tensor(uniform_init(rng, (c2, c1, kernel), c1 * kernel),
                         requires_grad=True)
        self.b2 = Tensor(np.zeros(c2), requires_grad=True)
        self.proj = Linear(rng, c2, dim)

    def __call__(self, x):
        if x.shape[1:] != (self.window, self.channels):
            raise ShapeError(
                f"window shape {x.shape[1:]} does not match configured "
                f"({self.window}, {self.channels})"
            )
        h = transpose(x, (0, 2, 1))
        h = relu(conv1d(h, self.w1, self.b1, stride=2, padding=2))
        h = relu(conv1d(h, self.w2, self.b2, stride=2, padding=2))
        h = h.mean(axis=2)
        return self.proj(h)


class MlpTrunk(Module):
    """Two-layer perceptron over the flattened window."""

    def __init__(self, rng, window, channels, dim, hidden=128):
        self.window = window
        self.channels = channels
        self.fc1 = Linear(rng, window * channels, hidden)
        self.fc2 = Linear(rng, hidden, dim)

    def __call__(self, x):
        if x.shape[1:] != (self.window, self.channels):
            raise ShapeError(
                f"window shape {x.shape[1:]} does not match configured "
                f"({self.window}, {self.channels})"
            )
        h = x.reshape(x.shape[0], self.window * self.channels)
        h = relu(self.fc1(h))
        return self.fc2(h)


class GaussianHead(Module):
    """Two-layer mean and variance heads; variance is softplus-floored."""

    def __init__(self, rng, dim):
        self.mean1 = Linear(rng, dim, dim)
        self.mean2 = Linear(rng, dim, dim)
        self.var1 = Linear(rng, dim, dim)
        self.var2 = Linear(rng, dim, dim)
        self.var2.b.data[:] = _UNIT_VAR_BIAS

    def __call__(self, h):
        mean = self.mean2(relu(self.mean1(h)))
        var = softplus(self.var2(relu(self.var1(h)))) + VAR_FLOOR
        return FeatureGaussian(mean=mean, variance=var)


class VarianceHead(Module):
    """Two-layer variance-only head with the same softplus floor."""

    def __init__(self, rng, dim):
        self.var1 = Linear(rng, dim, dim)
        self.var2 = Linear(rng, dim, dim)
        self.var2.b.data[:] = _UNIT_VAR_BIAS

    def __call__(self, h):
        return softplus(self.var2(relu(self.var1(h)))) + VAR_FLOOR


class GRUCell(Module):
    def __init__(self, rng, d_in, d_hidden):
        def mk(rows, cols, fan):
            return Tensor(uniform_init(rng, (rows, cols), fan), requires_grad=True)

        self.wxz, self.whz = mk(d_in, d_hidden, d_in), mk(d_hidden, d_hidden, d_hidden)
        self.bz = Tensor(np.zeros(d_hidden), requires_grad=True)
        self.wxr, self.whr = mk(d_in, d_hidden, d_in), mk(d_hidden, d_hidden, d_hidden)
        self.br = Tensor(np.zeros(d_hidden), requires_grad=True)
        self.wxn, self.whn = mk(d_in, d_hidden, d_in), mk(d_hidden, d_hidden, d_hidden)
        self.bn = Tensor(np.zeros(d_hidden), requires_grad=True)
        self.d_hidden = d_hidden

    def step(self, x, h):
        z = sigmoid(x @ self.wxz + h @ self.whz + self.bz)
        r = sigmoid(x @ self.wxr + h @ self.whr + self.br)
        n = tanh(x @ self.wxn + (r * h) @ self.whn + self.bn)
        return (1.0 - z) * n + z * h

    def __call__(self, seq):
        """seq: (B, T, D) -> final hidden state (B, H)."""
        if seq.ndim != 3 or seq.shape[1] < 1:
            raise ValueError(f"recurrent input needs a nonempty (B, T, D) sequence, got {seq.shape}")
        b = seq.shape[0]
        # project the whole sequence once per gate, then recur over steps
        xz = seq @ self.wxz + self.bz
        xr = seq @ self.wxr + self.br
        xn = seq @ self.wxn + self.bn
        h = Tensor(np.zeros((b, self.d_hidden)))
        for t in range(seq.shape[1]):
            z = sigmoid(xz[:, t, :] + h @ self.whz)
            r = sigmoid(xr[:, t, :] + h @ self.whr)
            n = tanh(xn[:, t, :] + (r * h) @ self.whn)
            h = (1.0 - z) * n + z * h
        return h


class ModalityEncoder(Module):
    """Trunk + current Gaussian head + temporal (recurrent) variance head.

    The objective only ever consumes the temporal variance (via the
    fluctuation uncertainty), so the temporal mean is the parameter-free
    sequence average rather than a head that could never receive gradient.
    """

    def __init__(self, rng, mod_spec, dim):
        if mod_spec.encoder == "mlp":
            self.trunk = MlpTrunk(rng, mod_spec.window, mod_spec.channels, dim)
        else:
            self.trunk = ConvTrunk(rng, mod_spec.window, mod_spec.channels, dim)
        self.head = GaussianHead(rng, dim)
        self.gru = GRUCell(rng, dim, dim)
        self.temporal_head = VarianceHead(rng, dim)

    def encode(self, x):
        return self.trunk(x)

    def current_gaussian(self, z):
        return self.head(z)

    def temporal_gaussian(self, seq):
        var = self.temporal_head(self.gru(seq))
        return FeatureGaussian(mean=seq.mean(axis=1), variance=var)
