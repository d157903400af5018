"""Uncertainty-derived modality weights and the decoupled-attention stack.

Weights are the simplex-normalized inverse products of input and
fluctuation uncertainty. The transformer layers share one query
projection while keys and values use per-modality projections scaled by
the same weights, so unreliable modalities are attenuated both at the
input and inside attention.
"""
from __future__ import annotations

import math

import numpy as np

from .numerics import (
    Linear,
    Module,
    ShapeError,
    Tensor,
    concat,
    layer_norm,
    relu,
    reshape,
    softmax,
    tlog,
    transpose,
    uniform_init,
)


def modality_weights(r, s, drop_input=False, drop_fluctuation=False):
    """Simplex weights proportional to 1/(r*s) per modality.

    Computed as a stable softmax over -(log r + log s): identical math,
    and equal uncertainties yield exactly uniform weights.
    """
    if drop_input and drop_fluctuation:
        b, m = r.shape
        return Tensor(np.full((b, m), 1.0 / m))
    if float(r.data.min()) <= 0 or float(s.data.min()) <= 0:
        raise ValueError("uncertainties must be strictly positive (floored upstream)")
    if drop_input:
        logits = -tlog(s)
    elif drop_fluctuation:
        logits = -tlog(r)
    else:
        logits = -(tlog(r) + tlog(s))
    return softmax(logits, axis=-1)


def uniform_weights(batch, m):
    return Tensor(np.full((batch, m), 1.0 / m))


def tokenize_and_weight(z_list, w, k_tok=1, scale_inputs=True):
    """Scale each modality's feature by its weight and lay out tokens.

    Returns (tokens (B, M*k_tok, D//k_tok), modality_of_token array).
    Token blocks are contiguous per modality.
    """
    m = len(z_list)
    b, d = z_list[0].shape
    if d % k_tok != 0:
        raise ShapeError(f"feature dim {d} not divisible by tokens-per-modality {k_tok}")
    parts = []
    for mi, z in enumerate(z_list):
        if z.shape != (b, d):
            raise ShapeError(f"modality {mi}: feature shape {z.shape} != ({b}, {d})")
        zz = z * w[:, mi].reshape(b, 1) if scale_inputs else z
        parts.append(zz.reshape(b, k_tok, d // k_tok))
    tokens = concat(parts, axis=1)
    modality_of_token = np.repeat(np.arange(m), k_tok)
    return tokens, modality_of_token


class FeedForward(Module):
    def __init__(self, rng, dim, hidden):
        self.fc1 = Linear(rng, dim, hidden)
        self.fc2 = Linear(rng, hidden, dim)

    def __call__(self, x):
        return self.fc2(relu(self.fc1(x)))


class DecoupledAttentionLayer(Module):
    """One fusion layer: shared queries, per-modality weighted keys/values."""

    def __init__(self, rng, dim, n_modalities, k_tok=1, heads=1, tied=False,
                 paper_rule=False):
        if dim % heads != 0:
            raise ShapeError(f"model dim {dim} not divisible by heads {heads}")
        self.dim = dim
        self.heads = heads
        self.n_modalities = n_modalities
        self.k_tok = k_tok
        self.tied = tied
        self.paper_rule = paper_rule
        self.wq = Tensor(uniform_init(rng, (dim, dim), dim), requires_grad=True)
        n_proj = 1 if tied else n_modalities
        self.wk = [Tensor(uniform_init(rng, (dim, dim), dim), requires_grad=True)
                   for _ in range(n_proj)]
        self.wv = [Tensor(uniform_init(rng, (dim, dim), dim), requires_grad=True)
                   for _ in range(n_proj)]
        self.ffn = FeedForward(rng, dim, 2 * dim)
        self.ln1_g = Tensor(np.ones(dim), requires_grad=True)
        self.ln1_b = Tensor(np.zeros(dim), requires_grad=True)
        self.ln2_g = Tensor(np.ones(dim), requires_grad=True)
        self.ln2_b = Tensor(np.zeros(dim), requires_grad=True)
        n_tok = n_modalities * k_tok
        # selector[t, m] = 1 iff token t belongs to modality m
        sel = np.zeros((n_tok, n_modalities))
        sel[np.arange(n_tok), np.repeat(np.arange(n_modalities), k_tok)] = 1.0
        self._selector = Tensor(sel.T)  # (M, n_tok)

    def project_qkv(self, x, w):
        """Queries, and weight-scaled per-modality keys/values, pre-softmax."""
        b, n_tok, _ = x.shape
        q = x @ self.wq
        token_w = (w @ self._selector).reshape(b, n_tok, 1)
        if self.tied:
            k = (x @ self.wk[0]) * token_w
            v = (x @ self.wv[0]) * token_w
        else:
            k = None
            v = None
            for mi in range(self.n_modalities):
                scale = (w[:, mi].reshape(b, 1, 1)
                         * self._selector[mi].reshape(1, n_tok, 1))
                km = (x @ self.wk[mi]) * scale
                vm = (x @ self.wv[mi]) * scale
                k = km if k is None else k + km
                v = vm if v is None else v + vm
        return q, k, v

    def _attend(self, q, k, v):
        b, n_tok, _ = q.shape
        dh = self.dim // self.heads
        q = transpose(reshape(q, (b, n_tok, self.heads, dh)), (0, 2, 1, 3))
        k = transpose(reshape(k, (b, n_tok, self.heads, dh)), (0, 2, 1, 3))
        v = transpose(reshape(v, (b, n_tok, self.heads, dh)), (0, 2, 1, 3))
        scores = (q @ transpose(k, (0, 1, 3, 2))) * (1.0 / math.sqrt(dh))
        attn = softmax(scores, axis=-1) @ v
        return reshape(transpose(attn, (0, 2, 1, 3)), (b, n_tok, self.dim))

    def __call__(self, tokens, w):
        if tokens.shape[-1] != self.dim:
            raise ShapeError(f"token width {tokens.shape[-1]} != layer dim {self.dim}")
        if self.paper_rule:
            q, k, v = self.project_qkv(tokens, w)
            attn = self._attend(q, k, v)
            return layer_norm(self.ffn(attn), self.ln2_g, self.ln2_b)
        x = layer_norm(tokens, self.ln1_g, self.ln1_b)
        q, k, v = self.project_qkv(x, w)
        h = tokens + self._attend(q, k, v)
        return h + self.ffn(layer_norm(h, self.ln2_g, self.ln2_b))


class FusionStack(Module):
    def __init__(self, rng, dim, n_layers, n_modalities, k_tok=1, heads=1,
                 tied=False, paper_rule=False):
        self.layers = [
            DecoupledAttentionLayer(rng, dim, n_modalities, k_tok=k_tok, heads=heads,
                                    tied=tied, paper_rule=paper_rule)
            for _ in range(n_layers)
        ]

    def __call__(self, tokens, w):
        for layer in self.layers:
            tokens = layer(tokens, w)
        return tokens


def fuse(z_list, r, s, stack, k_tok=1, scale_inputs=True, drop_input=False,
         drop_fluctuation=False, static=False):
    """Weights -> weighted tokens -> attention stack -> final token matrix."""
    if static:
        w = uniform_weights(z_list[0].shape[0], len(z_list))
    else:
        w = modality_weights(r, s, drop_input=drop_input, drop_fluctuation=drop_fluctuation)
    tokens, _ = tokenize_and_weight(z_list, w, k_tok=k_tok, scale_inputs=scale_inputs)
    return stack(tokens, w), w
