"""Loss functions returning (scalar loss, gradient w.r.t. outputs).

All three are means over the batch (and over output elements where the
target is dense), so gradient magnitudes are batch-size independent.
Implementations are numerically stable and dtype-generic.
"""

from __future__ import annotations

import numpy as np

from ticketlab.errors import ShapeError


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Softmax cross-entropy, mean over the batch.

    logits: (B, K); labels: (B,) integer class indices in [0, K).
    """
    if logits.ndim != 2:
        raise ShapeError(f"logits must be (B, K), got {logits.shape}")
    labels = np.asarray(labels)
    if labels.shape != (logits.shape[0],):
        raise ShapeError(f"labels must be ({logits.shape[0]},), got {labels.shape}")
    if not np.issubdtype(labels.dtype, np.integer):
        raise ShapeError(f"labels must be integers, got {labels.dtype}")
    k = logits.shape[1]
    if labels.min() < 0 or labels.max() >= k:
        raise ShapeError(f"labels out of range [0, {k})")

    m = logits.max(axis=1, keepdims=True)
    z = logits - m
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - lse
    b = logits.shape[0]
    loss = -logp[np.arange(b), labels].mean()
    grad = np.exp(logp)
    grad[np.arange(b), labels] -= 1.0
    grad /= b
    return float(loss), grad


def bce_logits(logits: np.ndarray, targets: np.ndarray):
    """Per-element binary cross-entropy on logits, mean over all elements.

    logits, targets: (B, K) with targets in [0, 1].
    """
    targets = np.asarray(targets, dtype=logits.dtype)
    if logits.shape != targets.shape:
        raise ShapeError(f"logits {logits.shape} vs targets {targets.shape}")
    # max(x,0) - x*t + log1p(exp(-|x|)) is exact and never overflows
    loss = np.maximum(logits, 0) - logits * targets + np.log1p(np.exp(-np.abs(logits)))
    grad = (_sigmoid(logits) - targets) / logits.size
    return float(loss.mean()), grad


def squared_error(pred: np.ndarray, targets: np.ndarray):
    """Mean squared error over all elements."""
    targets = np.asarray(targets, dtype=pred.dtype)
    if pred.shape != targets.shape:
        raise ShapeError(f"pred {pred.shape} vs targets {targets.shape}")
    diff = pred - targets
    loss = float((diff * diff).mean())
    grad = (2.0 / pred.size) * diff
    return loss, grad


LOSSES = {
    "cross_entropy": cross_entropy,
    "bce_logits": bce_logits,
    "squared_error": squared_error,
}
