"""Reverse-mode automatic differentiation over dense float64 arrays.

Tensors wrap numpy arrays and record enough of the computation graph to
propagate exact adjoints from a scalar loss back to every tensor that
requires gradients. Gradients accumulate additively until zeroed.
"""
from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Raised when operand shapes do not conform for an operation."""


_GRAD_ENABLED = True


class no_grad:
    """Context manager that disables graph recording (forward values only)."""

    def __enter__(self):
        global _GRAD_ENABLED
        self._prev = _GRAD_ENABLED
        _GRAD_ENABLED = False
        return self

    def __exit__(self, *exc):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._prev
        return False


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp", "name")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._vjp = None
        self.name = name

    # -- introspection -------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"

    # -- gradient bookkeeping ------------------------------------------
    def zero_grad(self):
        self.grad = None

    def detach(self):
        return Tensor(self.data)

    def backward(self):
        """Accumulate adjoints of this scalar into .grad of all graph tensors."""
        if self.data.size != 1:
            raise ShapeError(
                f"backward expects a scalar loss, got shape {self.data.shape}"
            )
        topo = _toposort(self)
        flow = {id(self): np.ones_like(self.data)}
        for t in reversed(topo):
            g = flow.pop(id(t), None)
            if g is None:
                continue
            if t.requires_grad:
                t.grad = g.copy() if t.grad is None else t.grad + g
            if t._vjp is None:
                continue
            for p, pg in zip(t._parents, t._vjp(g)):
                if pg is None:
                    continue
                if not (p.requires_grad or p._vjp is not None):
                    continue
                k = id(p)
                flow[k] = pg if k not in flow else flow[k] + pg

    # -- operator sugar --------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            return mul(self, reciprocal(other))
        return mul(self, 1.0 / float(other))

    def __rtruediv__(self, other):
        return mul(other, reciprocal(self))

    def __getitem__(self, key):
        return take(self, key)

    @property
    def T(self):
        return transpose(self)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        return reshape(self, *shape)

    def transpose(self, axes=None):
        return transpose(self, axes)


def _toposort(root):
    out = []
    seen = set()
    stack = [(root, False)]
    while stack:
        t, expanded = stack.pop()
        if expanded:
            out.append(t)
            continue
        if id(t) in seen:
            continue
        seen.add(id(t))
        stack.append((t, True))
        for p in t._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return out


def _coerce(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data, parents, vjp):
    track = _GRAD_ENABLED and any(
        p.requires_grad or p._vjp is not None for p in parents
    )
    t = Tensor(data)
    if track:
        t._parents = tuple(parents)
        t._vjp = vjp
    return t


def _unbroadcast(grad, shape):
    """Sum a broadcast gradient back down to the original operand shape."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (g, s) in enumerate(zip(grad.shape, shape)) if s == 1 and g != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _check_broadcast(a, b, opname):
    try:
        np.broadcast_shapes(a.data.shape, b.data.shape)
    except ValueError:
        raise ShapeError(
            f"{opname}: shapes {a.data.shape} and {b.data.shape} do not broadcast"
        ) from None


# -- elementwise arithmetic -----------------------------------------------

def add(a, b):
    a, b = _coerce(a), _coerce(b)
    _check_broadcast(a, b, "add")
    return _node(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)),
    )


def sub(a, b):
    a, b = _coerce(a), _coerce(b)
    _check_broadcast(a, b, "sub")
    return _node(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)),
    )


def mul(a, b):
    a, b = _coerce(a), _coerce(b)
    _check_broadcast(a, b, "mul")
    return _node(
        a.data * b.data,
        (a, b),
        lambda g: (
            _unbroadcast(g * b.data, a.data.shape),
            _unbroadcast(g * a.data, b.data.shape),
        ),
    )


def neg(a):
    a = _coerce(a)
    return _node(-a.data, (a,), lambda g: (-g,))


def reciprocal(a):
    a = _coerce(a)
    out = 1.0 / a.data
    return _node(out, (a,), lambda g: (-g * out * out,))


def square(a):
    a = _coerce(a)
    return _node(a.data * a.data, (a,), lambda g: (g * 2.0 * a.data,))


def sqrt(a):
    a = _coerce(a)
    out = np.sqrt(a.data)
    return _node(out, (a,), lambda g: (g * 0.5 / out,))


def texp(a):
    a = _coerce(a)
    out = np.exp(a.data)
    return _node(out, (a,), lambda g: (g * out,))


def tlog(a):
    a = _coerce(a)
    return _node(np.log(a.data), (a,), lambda g: (g / a.data,))


def tanh(a):
    a = _coerce(a)
    out = np.tanh(a.data)
    return _node(out, (a,), lambda g: (g * (1.0 - out * out),))


def sigmoid(a):
    a = _coerce(a)
    out = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return _node(out, (a,), lambda g: (g * out * (1.0 - out),))


def relu(a):
    a = _coerce(a)
    mask = a.data > 0
    return _node(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def softplus(a):
    a = _coerce(a)
    out = np.logaddexp(0.0, a.data)
    sig = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return _node(out, (a,), lambda g: (g * sig,))


# -- linear algebra and structure -----------------------------------------

def matmul(a, b):
    a, b = _coerce(a), _coerce(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(
            f"matmul requires ndim >= 2 operands, got {a.data.shape} and {b.data.shape}"
        )
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeError(
            f"matmul: inner dimensions disagree for {a.data.shape} and {b.data.shape}"
        )
    out = a.data @ b.data

    def vjp(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.data.shape), _unbroadcast(gb, b.data.shape)

    return _node(out, (a, b), vjp)


def transpose(a, axes=None):
    a = _coerce(a)
    if axes is None:
        inv = None
    else:
        axes = tuple(axes)
        inv = tuple(np.argsort(axes))
    out = np.transpose(a.data, axes)
    return _node(out, (a,), lambda g: (np.transpose(g, inv),))


def reshape(a, *shape):
    a = _coerce(a)
    if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
        shape = tuple(shape[0])
    out = a.data.reshape(shape)
    return _node(out, (a,), lambda g: (g.reshape(a.data.shape),))


def concat(tensors, axis=0):
    tensors = [_coerce(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat of empty sequence")
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return _node(out, tuple(tensors), vjp)


def take(a, key):
    a = _coerce(a)
    out = a.data[key]

    def vjp(g):
        ga = np.zeros_like(a.data)
        ga[key] += g
        return (ga,)

    return _node(out, (a,), vjp)


def _normalize_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(ax % ndim for ax in axis)


def tsum(a, axis=None, keepdims=False):
    a = _coerce(a)
    axes = _normalize_axes(axis, a.ndim)
    out = a.data.sum(axis=axes, keepdims=keepdims)

    def vjp(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.data.shape).copy(),)

    return _node(out, (a,), vjp)


def tmean(a, axis=None, keepdims=False):
    a = _coerce(a)
    axes = _normalize_axes(axis, a.ndim)
    n = 1
    for ax in axes:
        n *= a.data.shape[ax]
    return tsum(a, axis=axis, keepdims=keepdims) * (1.0 / n)


# -- one-dimensional convolutions ------------------------------------------

def _conv_windows(xp, n_out, k, stride):
    b, c, _ = xp.shape
    sb, sc, sl = xp.strides
    return np.lib.stride_tricks.as_strided(
        xp, shape=(b, c, n_out, k), strides=(sb, sc, stride * sl, sl)
    )


def conv1d(x, w, b=None, stride=1, padding=0):
    """Cross-correlation along the last axis. x: (B, Cin, L), w: (Cout, Cin, K)."""
    x, w = _coerce(x), _coerce(w)
    if x.ndim != 3 or w.ndim != 3:
        raise ShapeError(f"conv1d wants 3-d x and w, got {x.shape} and {w.shape}")
    if x.data.shape[1] != w.data.shape[1]:
        raise ShapeError(
            f"conv1d: channel mismatch between input {x.shape} and kernel {w.shape}"
        )
    batch, c_in, length = x.data.shape
    c_out, _, k = w.data.shape
    n_in = length + 2 * padding
    if n_in < k:
        raise ShapeError(f"conv1d: kernel {w.shape} longer than padded input {x.shape}")
    n_out = (n_in - k) // stride + 1
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding))) if padding else x.data
    # im2col + GEMM; win2: (B, n_out, Cin*K)
    win2 = np.ascontiguousarray(
        _conv_windows(xp, n_out, k, stride).transpose(0, 2, 1, 3)
    ).reshape(batch, n_out, c_in * k)
    w2 = w.data.reshape(c_out, c_in * k)
    out = (win2 @ w2.T).transpose(0, 2, 1)
    parents = [x, w]
    if b is not None:
        b = _coerce(b)
        out = out + b.data[:, None]
        parents.append(b)

    def vjp(g):
        g2 = np.ascontiguousarray(g.transpose(0, 2, 1))  # (B, n_out, Cout)
        gw = np.tensordot(g2, win2, axes=([0, 1], [0, 1])).reshape(w.data.shape)
        gwin = (g2 @ w2).reshape(batch, n_out, c_in, k).transpose(0, 2, 1, 3)
        gxp = np.zeros((batch, c_in, n_in))
        for kk in range(k):
            gxp[:, :, kk : kk + stride * n_out : stride] += gwin[:, :, :, kk]
        gx = gxp[:, :, padding : padding + length] if padding else gxp
        if len(parents) == 3:
            return gx, gw, g.sum(axis=(0, 2))
        return gx, gw

    return _node(out, tuple(parents), vjp)


def conv_transpose1d(x, w, b=None, padding=0):
    """Adjoint of stride-1 conv1d. x: (B, Cin, L), w: (Cin, Cout, K)."""
    x, w = _coerce(x), _coerce(w)
    if x.ndim != 3 or w.ndim != 3:
        raise ShapeError(
            f"conv_transpose1d wants 3-d x and w, got {x.shape} and {w.shape}"
        )
    if x.data.shape[1] != w.data.shape[0]:
        raise ShapeError(
            f"conv_transpose1d: channel mismatch between input {x.shape} and kernel {w.shape}"
        )
    batch, c_in, n = x.data.shape
    c_out, k = w.data.shape[1], w.data.shape[2]
    n_full = n + k - 1
    n_out = n_full - 2 * padding
    if n_out < 1:
        raise ShapeError(f"conv_transpose1d: padding {padding} swallows output of {x.shape}")
    xt = x.data.transpose(0, 2, 1)  # (B, n, Cin)
    full = np.zeros((batch, n_full, c_out))
    for kk in range(k):
        full[:, kk : kk + n, :] += xt @ w.data[:, :, kk]
    out = full.transpose(0, 2, 1)[:, :, padding : padding + n_out]
    parents = [x, w]
    if b is not None:
        b = _coerce(b)
        out = out + b.data[:, None]
        parents.append(b)

    def vjp(g):
        gfull = np.zeros((batch, n_full, c_out))
        gfull[:, padding : padding + n_out, :] = g.transpose(0, 2, 1)
        gxt = np.zeros((batch, n, c_in))
        gw = np.zeros_like(w.data)
        for kk in range(k):
            seg = gfull[:, kk : kk + n, :]
            gxt += seg @ w.data[:, :, kk].T
            gw[:, :, kk] = np.tensordot(xt, seg, axes=([0, 1], [0, 1]))
        gx = gxt.transpose(0, 2, 1)
        if len(parents) == 3:
            return gx, gw, g.sum(axis=(0, 2))
        return gx, gw

    return _node(out, tuple(parents), vjp)
