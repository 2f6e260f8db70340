"""Bi-temporal samples and batch assembly"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence, Tuple

import numpy as np

from src.core.errors import DatasetError, ShapeError
from src.numerics.tensor import Tensor


@dataclass
class BiTemporalSample:
    """Co-registered pre/post images (H×W×3 floats in [0, 1]) and a {0, 1} change mask"""
    pre: np.ndarray
    post: np.ndarray
    label: np.ndarray
    name: str = ""

    def __post_init__(self):
        self.pre = np.asarray(self.pre, dtype=np.float32)
        self.post = np.asarray(self.post, dtype=np.float32)
        self.label = np.asarray(self.label, dtype=np.uint8)
        if self.pre.ndim != 3 or self.pre.shape != self.post.shape:
            raise ShapeError(f"{self.name or 'sample'}: pre {self.pre.shape} and post {self.post.shape} differ")
        if self.label.shape != self.pre.shape[:2]:
            raise ShapeError(f"{self.name or 'sample'}: label {self.label.shape} does not match image {self.pre.shape[:2]}")
        if self.label.size and self.label.max() > 1:
            raise DatasetError(f"{self.name or 'sample'}: label values must be 0 or 1")

    @property
    def size(self) -> Tuple[int, int]:
        return self.label.shape

    def with_arrays(self, pre=None, post=None, label=None) -> "BiTemporalSample":
        return replace(
            self,
            pre=self.pre if pre is None else pre,
            post=self.post if post is None else post,
            label=self.label if label is None else label,
        )


def stack_batch(samples: Sequence[BiTemporalSample], dtype: str = "float32") -> Tuple[Tensor, Tensor, np.ndarray]:
    """N samples of one size -> (pre N×H×W×3, post N×H×W×3, labels N×H×W)"""
    if not samples:
        raise DatasetError("cannot batch an empty sample list")
    sizes = {s.size for s in samples}
    if len(sizes) != 1:
        raise ShapeError(f"batch mixes sample sizes {sorted(sizes)}")
    pre = Tensor(np.stack([s.pre for s in samples]), dtype=dtype)
    post = Tensor(np.stack([s.post for s in samples]), dtype=dtype)
    labels = np.stack([s.label for s in samples]).astype(np.int64)
    return pre, post, labels
