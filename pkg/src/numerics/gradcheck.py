"""Central finite-difference verification of analytic gradients"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from src.core.errors import DTypeError
from .tensor import GradTape, Tensor, no_grad

FLOOR = 1e-8


@dataclass
class GradcheckResult:
    max_error: float
    worst_index: Optional[Tuple[int, ...]]
    nan_index: Optional[Tuple[int, ...]]
    tolerance: float
    coordinates: int

    @property
    def passed(self) -> bool:
        return self.nan_index is None and self.max_error <= self.tolerance


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), FLOOR)
    return np.abs(analytic - numeric) / denom


def gradcheck(
    f: Callable[[Tensor], Tensor],
    x: Tensor,
    epsilon: float = 1e-5,
    tolerance: float = 1e-4,
    coordinates: Optional[Sequence[Tuple[int, ...]]] = None,
) -> GradcheckResult:
    """Compare backward() of scalar-valued `f` at `x` against central differences.

    `coordinates` restricts the numeric sweep to a subset of indices (large inputs).
    """
    if x.dtype != np.float64:
        raise DTypeError(f"gradcheck requires float64 input, got {x.dtype}")

    point = Tensor(x.data.copy(), requires_grad=True)
    with GradTape() as tape:
        loss = f(point)
        if loss.requires_grad:
            tape.backward(loss)
    analytic = point.grad if point.grad is not None else np.zeros_like(point.data)

    if coordinates is None:
        coordinates = list(np.ndindex(*x.shape))

    base = x.data.copy()
    worst, worst_index, nan_index = 0.0, None, None
    with no_grad():
        for index in coordinates:
            index = tuple(int(i) for i in index)
            original = base[index]
            base[index] = original + epsilon
            plus = f(Tensor(base.copy())).item()
            base[index] = original - epsilon
            minus = f(Tensor(base.copy())).item()
            base[index] = original

            numeric = (plus - minus) / (2.0 * epsilon)
            a = float(analytic[index])
            if np.isnan(a) or np.isnan(numeric):
                nan_index = nan_index or index
                continue
            err = float(relative_error(np.float64(a), np.float64(numeric)))
            if err > worst:
                worst, worst_index = err, index

    return GradcheckResult(worst, worst_index, nan_index, tolerance, len(coordinates))


def sample_coordinates(shape: Tuple[int, ...], count: int, seed: int = 0) -> list:
    """Deterministic subset of indices for gradchecking large tensors"""
    total = int(np.prod(shape))
    if total <= count:
        return list(np.ndindex(*shape))
    flat = np.random.default_rng(seed).choice(total, size=count, replace=False)
    return [np.unravel_index(i, shape) for i in sorted(flat)]
