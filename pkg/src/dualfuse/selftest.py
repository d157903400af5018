"""Built-in gradient and invariant checks backing the `selftest` command."""
from __future__ import annotations

import numpy as np

from .fusion import modality_weights
from .metrics import auroc, classification_metrics
from .numerics import (
    Tensor,
    concat,
    conv1d,
    conv_transpose1d,
    gradcheck,
    l2_norm,
    layer_norm,
    matmul,
    mul,
    relu,
    sigmoid,
    softmax,
    softplus,
    sqrt,
    square,
    sub,
    tanh,
    texp,
    tlog,
    transpose,
)

GRAD_TOL = 1e-4


def _op_cases(rng):
    a = lambda *s: Tensor(rng.standard_normal(s), requires_grad=True)
    pos = lambda *s: Tensor(rng.uniform(0.5, 2.0, s), requires_grad=True)
    return [
        ("add", lambda x, y: x + y, [a(3, 4), a(3, 4)]),
        ("sub", lambda x, y: sub(x, y), [a(3, 4), a(1, 4)]),
        ("mul", lambda x, y: mul(x, y), [a(2, 3), a(2, 3)]),
        ("matmul", lambda x, y: matmul(x, y), [a(3, 4), a(4, 2)]),
        ("transpose", lambda x: transpose(x, (1, 0)), [a(3, 4)]),
        ("concat", lambda x, y: concat([x, y], axis=1), [a(2, 3), a(2, 2)]),
        ("slice", lambda x: x[:, 1:3], [a(3, 5)]),
        ("sum", lambda x: x.sum(axis=0), [a(4, 3)]),
        ("mean", lambda x: x.mean(axis=1), [a(4, 3)]),
        ("exp", texp, [a(3, 3)]),
        ("log", tlog, [pos(3, 3)]),
        ("softplus", softplus, [a(3, 3)]),
        ("tanh", tanh, [a(3, 3)]),
        ("sigmoid", sigmoid, [a(3, 3)]),
        ("relu", relu, [a(3, 3)]),
        ("softmax", softmax, [a(3, 4)]),
        ("layer_norm", layer_norm, [a(3, 6)]),
        ("l2_norm", l2_norm, [pos(3, 4)]),
        ("square", square, [a(3, 3)]),
        ("sqrt", sqrt, [pos(3, 3)]),
        ("reciprocal", lambda x: 1.0 / x, [pos(3, 3)]),
        ("conv1d", lambda x, w, b: conv1d(x, w, b, stride=2, padding=2),
         [a(2, 2, 8), a(3, 2, 5), a(3)]),
        ("conv_transpose1d", lambda x, w, b: conv_transpose1d(x, w, b, padding=1),
         [a(2, 2, 6), a(2, 3, 3), a(3)]),
    ]


def run_selftest(quick=True, echo=print):
    rng = np.random.default_rng(20240817)
    trials = 5 if quick else 100
    ok = True

    for trial in range(trials):
        for name, fn, inputs in _op_cases(rng):
            err = gradcheck(fn, inputs, rng)
            if err > GRAD_TOL:
                echo(f"FAIL gradcheck {name}: rel err {err:.2e}")
                ok = False
    echo(f"PASS gradcheck x{trials} over {len(_op_cases(rng))} ops" if ok else
         "FAIL gradcheck")

    simplex_ok = True
    for _ in range(200):
        r = Tensor(rng.uniform(1e-4, 10.0, (4, 3)))
        s = Tensor(rng.uniform(1e-4, 10.0, (4, 3)))
        w = modality_weights(r, s).data
        if not (np.all(w > 0) and np.allclose(w.sum(axis=1), 1.0, atol=1e-9)):
            simplex_ok = False
    echo("PASS fusion weight simplex" if simplex_ok else "FAIL fusion weight simplex")
    ok = ok and simplex_ok

    sm_ok = True
    for _ in range(200):
        x = Tensor(rng.standard_normal((5, 7)) * 10)
        p = softmax(x).data
        if not (np.all(p > 0) and np.allclose(p.sum(axis=1), 1.0, atol=1e-9)):
            sm_ok = False
    echo("PASS softmax rows" if sm_ok else "FAIL softmax rows")
    ok = ok and sm_ok

    met_ok = True
    for _ in range(100):
        n = int(rng.integers(4, 30))
        c = int(rng.integers(2, 5))
        labels = rng.integers(0, c, n)
        preds = rng.integers(0, c, n)
        m = classification_metrics(preds, labels, n_classes=c)
        if not 0.0 <= m["accuracy"] <= 1.0:
            met_ok = False
        if len(np.unique(labels)) >= 2:
            scores = rng.standard_normal(n)
            bl = (labels == labels[0]).astype(int)
            if 0 < bl.sum() < n:
                pairs = [
                    0.5 if scores[i] == scores[j] else float(scores[i] > scores[j])
                    for i in range(n) for j in range(n) if bl[i] == 1 and bl[j] == 0
                ]
                if abs(auroc(scores, bl) - np.mean(pairs)) > 1e-12:
                    met_ok = False
    echo("PASS metrics vs brute force" if met_ok else "FAIL metrics vs brute force")
    ok = ok and met_ok
    return ok
