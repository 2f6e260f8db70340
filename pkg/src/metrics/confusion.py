"""Pixel confusion counts for the change class"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from src.core.errors import ShapeError, UserError


@dataclass
class ConfusionMatrix:
    """Change is the positive class; counts are Python ints"""
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn)

    def transposed(self) -> "ConfusionMatrix":
        """Counts with prediction and label swapped"""
        return ConfusionMatrix(self.tp, self.fn, self.fp, self.tn)

    def as_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn}


def _binary(mask, what: str) -> np.ndarray:
    mask = np.asarray(mask)
    if mask.size and not np.isin(mask, (0, 1)).all():
        raise UserError(f"{what} mask must be binary")
    return mask.astype(bool)


def accumulate(cm: ConfusionMatrix, predicted_mask, label_mask) -> ConfusionMatrix:
    """Add per-pixel counts of one prediction/label pair (any leading batch shape)"""
    pred = _binary(predicted_mask, "predicted")
    label = _binary(label_mask, "label")
    if pred.shape != label.shape:
        raise ShapeError(f"predicted mask {pred.shape} and label mask {label.shape} differ")
    tp = int(np.count_nonzero(pred & label))
    fp = int(np.count_nonzero(pred & ~label))
    fn = int(np.count_nonzero(~pred & label))
    tn = int(pred.size) - tp - fp - fn
    return ConfusionMatrix(cm.tp + tp, cm.fp + fp, cm.fn + fn, cm.tn + tn)


def merge(matrices: Iterable[ConfusionMatrix]) -> ConfusionMatrix:
    total = ConfusionMatrix()
    for cm in matrices:
        total = total + cm
    return total


def predictions_from_logits(logits) -> np.ndarray:
    """Argmax over the class axis: 1 where the change logit wins"""
    data = getattr(logits, "data", logits)
    return np.argmax(data, axis=-1).astype(np.uint8)
