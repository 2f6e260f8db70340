"""Pixel-wise cross-entropy"""
from __future__ import annotations

import numpy as np

from src.core.errors import ShapeError, UserError
from src.numerics.tensor import Tensor, apply_op
from .functional import softmax_array


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean over pixels of −log softmax(logits)[label]; logits N×H×W×N_cls"""
    labels = np.asarray(labels.data if isinstance(labels, Tensor) else labels)
    if labels.shape != logits.shape[:-1]:
        raise ShapeError(f"cross_entropy: labels {labels.shape} do not match logits {logits.shape}")
    if labels.dtype.kind == "f":
        if not np.all(labels == np.round(labels)):
            raise UserError("cross_entropy: labels must be integral class indices")
    labels = labels.astype(np.int64)
    classes = logits.shape[-1]
    if labels.size and (labels.min() < 0 or labels.max() >= classes):
        raise UserError(
            f"cross_entropy: labels must lie in [0, {classes - 1}], got range [{labels.min()}, {labels.max()}]"
        )

    z = logits.data
    shift = z.max(axis=-1, keepdims=True)
    log_norm = np.log(np.exp(z - shift).sum(axis=-1, keepdims=True)) + shift
    picked = np.take_along_axis(z, labels[..., None], axis=-1)
    count = labels.size
    loss = np.asarray((log_norm - picked).sum() / count, dtype=z.dtype)

    def backward(g):
        probs = softmax_array(z, axis=-1)
        np.put_along_axis(probs, labels[..., None], np.take_along_axis(probs, labels[..., None], axis=-1) - 1.0, axis=-1)
        return (probs * (g / count),)

    return apply_op("cross_entropy", (logits,), loss, backward)
