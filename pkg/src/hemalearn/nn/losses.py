"""Batch-mean losses. Classification losses consume raw logits."""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError, InputError
from . import ops
from .tape import Tensor


def mse_loss(pred: Tensor, target) -> Tensor:
    diff = ops.sub(pred, target)
    return ops.mean(ops.mul(diff, diff))


def cross_entropy_loss(logits: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood from logits, stable via log-sum-exp."""
    labels = np.asarray(labels)
    num_classes = logits.shape[-1]
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise InputError(
            f"labels must lie in [0, {num_classes}), got range "
            f"[{labels.min()}, {labels.max()}]"
        )
    log_probs = ops.log_softmax(logits, axis=-1)
    picked = ops.gather_rows(log_probs, labels)
    return ops.neg(ops.mean(picked))


def binary_cross_entropy_loss(logits: Tensor, labels) -> Tensor:
    """Sigmoid cross-entropy from a single logit per sample.

    Uses the softplus identity bce = softplus(x) - x*y, which is stable
    for any finite logit.
    """
    labels = np.asarray(labels)
    unique = np.unique(labels)
    if unique.size and not np.all(np.isin(unique, (0, 1))):
        raise InputError(f"binary labels must be 0/1, got values {unique}")
    y = labels.astype(logits.dtype).reshape(logits.shape)
    return ops.mean(ops.sub(ops.softplus(logits), ops.mul(logits, y)))


_LOSSES = {
    "mse": mse_loss,
    "cross_entropy": cross_entropy_loss,
    "binary_cross_entropy": binary_cross_entropy_loss,
}


def loss(kind: str, pred: Tensor, target) -> Tensor:
    """Dispatch by name; kinds: mse, cross_entropy, binary_cross_entropy."""
    try:
        fn = _LOSSES[kind]
    except KeyError:
        raise ConfigError(f"unknown loss '{kind}', expected one of {sorted(_LOSSES)}") from None
    return fn(pred, target)
