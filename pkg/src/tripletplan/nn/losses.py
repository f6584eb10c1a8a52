"""Loss functions, each fused into a single tape node with an exact backward.

All reject non-finite inputs and return non-negative scalars.
"""

import numpy as np

from .tensor import Tensor, as_tensor, make_op, _sigmoid_np


def _check_finite(arr: np.ndarray, what: str):
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"non-finite values in {what}")


def multilabel_bce(logits, targets) -> Tensor:
    """Per-class sigmoid binary cross-entropy, mean over all elements.

    Stable log-sum-exp form: max(z,0) - z*y + log(1+exp(-|z|)). Zero logits
    give ln(2) regardless of targets.
    """
    logits = as_tensor(logits)
    y = targets.data if isinstance(targets, Tensor) else np.asarray(targets, dtype=np.float64)
    z = logits.data
    _check_finite(z, "logits")
    _check_finite(y, "targets")
    if z.shape != y.shape:
        raise ValueError(f"logits shape {z.shape} vs targets shape {y.shape}")
    per = np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))
    data = np.array(per.mean())
    n = z.size

    def backward(g):
        logits.accumulate_grad((_sigmoid_np(z) - y) * (g / n))

    return make_op(data, (logits,), backward)


def softmax_ce(logits, classes) -> Tensor:
    """Categorical cross-entropy over the last axis, mean over rows."""
    logits = as_tensor(logits)
    z = logits.data
    _check_finite(z, "logits")
    idx = np.asarray(classes, dtype=np.intp)
    if z.ndim != 2 or idx.shape != (z.shape[0],):
        raise ValueError(f"expected (B,K) logits and (B,) classes, got {z.shape} and {idx.shape}")
    shifted = z - z.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - lse
    B = z.shape[0]
    data = np.array(-logp[np.arange(B), idx].mean())

    def backward(g):
        grad = np.exp(logp)
        grad[np.arange(B), idx] -= 1.0
        logits.accumulate_grad(grad * (g / B))

    return make_op(data, (logits,), backward)


def mse(pred, target) -> Tensor:
    """Mean squared error against a constant target."""
    pred = as_tensor(pred)
    t = target.data if isinstance(target, Tensor) else np.asarray(target, dtype=np.float64)
    _check_finite(pred.data, "predictions")
    _check_finite(t, "targets")
    if pred.data.shape != t.shape:
        raise ValueError(f"pred shape {pred.data.shape} vs target shape {t.shape}")
    diff = pred.data - t
    data = np.array((diff * diff).mean())
    n = diff.size

    def backward(g):
        pred.accumulate_grad(diff * (2.0 * g / n))

    return make_op(data, (pred,), backward)
