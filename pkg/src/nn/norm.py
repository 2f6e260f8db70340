"""Batch and layer normalization"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from src.core.errors import ShapeError
from src.numerics.tensor import Tensor, apply_op, check_same_dtype


@dataclass
class NormState:
    """Affine parameters plus, for batch norm, running statistics updated in place"""
    weight: Tensor
    bias: Tensor
    eps: float = 1e-5
    momentum: float = 0.1
    running_mean: Optional[np.ndarray] = None
    running_var: Optional[np.ndarray] = None

    @property
    def channels(self) -> int:
        return self.weight.shape[0]


def _normalize_backward(g: np.ndarray, xhat: np.ndarray, inv: np.ndarray, gamma: np.ndarray,
                        axes: Tuple[int, ...]) -> np.ndarray:
    gxhat = g * gamma
    return inv * (
        gxhat
        - gxhat.mean(axis=axes, keepdims=True)
        - xhat * (gxhat * xhat).mean(axis=axes, keepdims=True)
    )


def layernorm(x: Tensor, state: NormState) -> Tensor:
    """Normalize over the last axis, then scale and shift"""
    check_same_dtype("layernorm", x, state.weight, state.bias)
    if x.shape[-1] != state.channels:
        raise ShapeError(f"layernorm: last axis {x.shape[-1]} != {state.channels} channels")

    data = x.data
    mu = data.mean(axis=-1, keepdims=True)
    centered = data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + state.eps)
    xhat = centered * inv
    out = xhat * state.weight.data + state.bias.data
    lead = tuple(range(data.ndim - 1))

    def backward(g):
        gx = _normalize_backward(g, xhat, inv, state.weight.data, (-1,)) if x.requires_grad else None
        return gx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return apply_op("layernorm", (x, state.weight, state.bias), out, backward)


def batchnorm2d(x: Tensor, state: NormState, training: bool) -> Tensor:
    """Per-channel normalization of N×H×W×C input.

    Training mode normalizes with batch statistics and updates the running
    estimates (unbiased variance); eval mode uses the running estimates.
    """
    check_same_dtype("batchnorm2d", x, state.weight, state.bias)
    if x.ndim != 4 or x.shape[-1] != state.channels:
        raise ShapeError(f"batchnorm2d: expected N×H×W×{state.channels} input, got {x.shape}")
    if state.running_mean is None or state.running_var is None:
        raise ShapeError("batchnorm2d: state has no running statistics")

    data = x.data
    axes = (0, 1, 2)
    gamma = state.weight.data

    if training:
        count = data.shape[0] * data.shape[1] * data.shape[2]
        mu = data.mean(axis=axes, keepdims=True)
        centered = data - mu
        var = (centered * centered).mean(axis=axes, keepdims=True)
        inv = 1.0 / np.sqrt(var + state.eps)
        xhat = centered * inv

        unbiased = var.reshape(-1) * (count / (count - 1) if count > 1 else 1.0)
        m = state.momentum
        state.running_mean *= 1.0 - m
        state.running_mean += m * mu.reshape(-1)
        state.running_var *= 1.0 - m
        state.running_var += m * unbiased

        def data_grad(g):
            return _normalize_backward(g, xhat, inv, gamma, axes)
    else:
        inv = (1.0 / np.sqrt(state.running_var + state.eps)).astype(data.dtype)
        xhat = (data - state.running_mean.astype(data.dtype)) * inv

        def data_grad(g):
            return g * gamma * inv

    out = xhat * gamma + state.bias.data

    def backward(g):
        gx = data_grad(g) if x.requires_grad else None
        return gx, (g * xhat).sum(axis=axes), g.sum(axis=axes)

    return apply_op("batchnorm2d", (x, state.weight, state.bias), out, backward)
