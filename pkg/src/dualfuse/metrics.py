"""Classification metrics and rank statistics."""
from __future__ import annotations

import numpy as np


def confusion_matrix(predictions, labels, n_classes=None):
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.shape != labels.shape:
        raise ValueError(f"length mismatch: {predictions.shape} vs {labels.shape}")
    if predictions.size == 0:
        raise ValueError("cannot compute metrics on empty input")
    if n_classes is None:
        n_classes = int(max(predictions.max(), labels.max())) + 1
    if labels.min() < 0 or labels.max() >= n_classes:
        raise ValueError(f"label out of range [0, {n_classes})")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (labels, predictions), 1)
    return cm


def classification_metrics(predictions, labels, n_classes=None):
    """Accuracy plus macro precision/recall/F1; zero-division cells give 0."""
    cm = confusion_matrix(predictions, labels, n_classes)
    total = cm.sum()
    tp = np.diag(cm).astype(float)
    pred_pos = cm.sum(axis=0).astype(float)
    true_pos = cm.sum(axis=1).astype(float)
    zero_division = False
    prec = np.zeros(len(tp))
    rec = np.zeros(len(tp))
    f1 = np.zeros(len(tp))
    for c in range(len(tp)):
        if pred_pos[c] > 0:
            prec[c] = tp[c] / pred_pos[c]
        else:
            zero_division = True
        if true_pos[c] > 0:
            rec[c] = tp[c] / true_pos[c]
        else:
            zero_division = True
        if prec[c] + rec[c] > 0:
            f1[c] = 2 * prec[c] * rec[c] / (prec[c] + rec[c])
    return {
        "accuracy": float(tp.sum() / total),
        "precision": float(prec.mean()),
        "recall": float(rec.mean()),
        "f1": float(f1.mean()),
        "zero_division": zero_division,
    }


def _midranks(x):
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(len(x))
    sx = x[order]
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and sx[j + 1] == sx[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def auroc(scores, labels):
    """Rank-based (Mann-Whitney) AUROC with midranks for ties."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    if scores.shape != labels.shape:
        raise ValueError(f"length mismatch: {scores.shape} vs {labels.shape}")
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        missing = 1 if n_pos == 0 else 0
        raise ValueError(f"auroc needs both classes; class {missing} is absent")
    ranks = _midranks(scores)
    rank_sum = ranks[labels == 1].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def macro_auroc(probs, labels):
    """One-vs-rest macro AUROC over the class-probability columns."""
    probs = np.asarray(probs, dtype=float)
    labels = np.asarray(labels)
    if probs.ndim != 2 or probs.shape[0] != labels.shape[0]:
        raise ValueError(f"probs {probs.shape} do not match labels {labels.shape}")
    vals = [auroc(probs[:, c], (labels == c).astype(int)) for c in range(probs.shape[1])]
    return float(np.mean(vals))


def pearson(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.std() == 0 or y.std() == 0:
        return None
    return float(np.corrcoef(x, y)[0, 1])


def spearman(x, y):
    """Rank correlation with midranks; None when either input is constant."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.all(x == x[0]) or np.all(y == y[0]):
        return None
    return pearson(_midranks(x), _midranks(y))
