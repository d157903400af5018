"""Central finite-difference oracle for gradient verification.

The oracle only ever evaluates forward passes, so it stays independent
of the adjoint code it is used to check.
"""
from __future__ import annotations

import numpy as np

from .tensor import Tensor, no_grad


def gradcheck(fn, inputs, rng, step=1e-5, sample=None):
    """Compare analytic gradients of fn(*inputs) against finite differences.

    fn maps the given Tensors to an output Tensor; the check contracts the
    output with a fixed random cotangent so a single scalar is probed.
    Returns the worst relative error over all checked coordinates.
    sample: optionally check at most this many coordinates per input.
    """
    out = fn(*inputs)
    cot = rng.standard_normal(out.data.shape)

    for t in inputs:
        t.zero_grad()
    loss = (out * Tensor(cot)).sum()
    loss.backward()

    def scalar():
        with no_grad():
            return float((fn(*inputs).data * cot).sum())

    worst = 0.0
    for t in inputs:
        if t.grad is None:
            raise AssertionError("input received no gradient")
        flat = t.data.reshape(-1)
        gflat = t.grad.reshape(-1)
        idx = np.arange(flat.size)
        if sample is not None and flat.size > sample:
            idx = rng.choice(flat.size, size=sample, replace=False)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + step
            fp = scalar()
            flat[i] = orig - step
            fm = scalar()
            flat[i] = orig
            fd = (fp - fm) / (2.0 * step)
            an = gflat[i]
            err = abs(an - fd) / max(abs(an), abs(fd), 1.0)
            worst = max(worst, err)
    return worst
