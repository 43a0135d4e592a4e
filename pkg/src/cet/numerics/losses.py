"""Scalar training objectives."""

from __future__ import annotations

import numpy as np

from ..errors import LabelIndexError, NumericError, ShapeError
from .tensor import Tensor, _result


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood of ``labels`` under ``softmax(logits)``."""
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    n, c = logits.shape
    if labels.shape[0] != n:
        raise ShapeError(f"cross_entropy: {n} logit rows but {labels.shape[0]} labels")
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise LabelIndexError(f"cross_entropy: labels must lie in [0, {c}), got {labels.min()}..{labels.max()}")
    x = logits.data
    if np.isnan(x).any():
        raise NumericError("cross_entropy: NaN logits")
    m = x.max(axis=1, keepdims=True)
    e = np.exp(x - m)
    s = e.sum(axis=1, keepdims=True)
    logp = x - m - np.log(s)
    rows = np.arange(n)
    loss = -logp[rows, labels].mean()

    def bw(g):
        grad = e / s
        grad[rows, labels] -= 1.0
        return (grad * (g / n),)
    return _result(np.asarray(loss, dtype=x.dtype), (logits,), bw)


def mse(pred: Tensor, target, mask=None) -> Tensor:
    """Mean squared error, optionally restricted to ``mask``-selected entries.

    ``mask`` broadcasts against ``pred``; the mean is taken over selected
    entries only, so unselected entries get exactly zero gradient.
    """
    target = np.asarray(target.data if isinstance(target, Tensor) else target, dtype=pred.dtype)
    if target.shape != pred.shape:
        raise ShapeError(f"mse: prediction {pred.shape} vs target {target.shape}")
    diff = pred.data - target
    if mask is None:
        w = None
        count = diff.size
    else:
        w = np.broadcast_to(np.asarray(mask, dtype=pred.dtype), pred.shape)
        count = float(w.sum())
        if count == 0:
            raise ShapeError("mse: mask selects no entries")
        diff = diff * w
    loss = (diff * diff).sum() / count

    def bw(g):
        return (g * 2.0 * diff / count,)
    return _result(np.asarray(loss, dtype=pred.dtype), (pred,), bw)
