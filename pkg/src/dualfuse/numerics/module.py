"""Tiny parameter-container layer on top of the autodiff tensors."""
from __future__ import annotations

import numpy as np

from .tensor import Tensor


def uniform_init(rng, shape, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Module:
    """Base class: walks attributes to find parameters, depth first."""

    def _children(self):
        for name, val in vars(self).items():
            if isinstance(val, (Tensor, Module)):
                yield name, val
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, (Tensor, Module)):
                        yield f"{name}.{i}", item

    def named_parameters(self, prefix=""):
        for name, val in self._children():
            full = f"{prefix}{name}"
            if isinstance(val, Tensor):
                if val.requires_grad:
                    yield full, val
            else:
                yield from val.named_parameters(prefix=full + ".")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def state_dict(self):
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state):
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        extra = sorted(set(state) - set(own))
        if missing or extra:
            raise KeyError(f"state dict mismatch: missing={missing} unexpected={extra}")
        for name, p in own.items():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != p.data.shape:
                raise ValueError(
                    f"parameter {name}: checkpoint shape {arr.shape} != model shape {p.data.shape}"
                )
            p.data = arr.copy()


class Linear(Module):
    def __init__(self, rng, d_in, d_out, bias=True):
        self.w = Tensor(uniform_init(rng, (d_in, d_out), d_in), requires_grad=True)
        self.b = Tensor(np.zeros(d_out), requires_grad=True) if bias else None

    def __call__(self, x):
        out = x @ self.w
        if self.b is not None:
            out = out + self.b
        return out
