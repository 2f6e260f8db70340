"""Linear layers, activations, softmax and bilinear resampling"""
from __future__ import annotations

import math
from typing import Optional, Tuple

import numpy as np
from scipy.special import erf

from src.core.errors import ShapeError
from src.numerics import ops
from src.numerics.tensor import Tensor, apply_op

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None, tag: Optional[str] = None) -> Tensor:
    """Affine map along the last axis; weight is (C_in, C_out)"""
    c_in, c_out = weight.shape
    if x.shape[-1] != c_in:
        raise ShapeError(f"linear: input channels {x.shape[-1]} != weight rows {c_in} (weight {weight.shape})")
    lead = x.shape[:-1]
    y = ops.matmul(ops.reshape(x, (-1, c_in)), weight, tag=tag)
    if bias is not None:
        y = ops.add(y, bias)
    return ops.reshape(y, (*lead, c_out))


def gelu(x: Tensor) -> Tensor:
    """x·Φ(x) with the exact error-function CDF"""
    data = x.data
    cdf = 0.5 * (1.0 + erf(data * _INV_SQRT2))
    out = (data * cdf).astype(data.dtype)

    def backward(g):
        pdf = _INV_SQRT2PI * np.exp(-0.5 * data * data)
        return ((g * (cdf + data * pdf)).astype(data.dtype),)

    return apply_op("gelu", (x,), out, backward)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return apply_op("relu", (x,), np.where(mask, x.data, 0).astype(x.dtype), lambda g: (g * mask,))


def activation(x: Tensor, kind: str) -> Tensor:
    kind = kind.lower()
    if kind == "gelu":
        return gelu(x)
    if kind == "relu":
        return relu(x)
    raise ValueError(f"unknown activation {kind!r}")


def softmax_array(data: np.ndarray, axis: int = -1) -> np.ndarray:
    """Max-shifted softmax.

    -inf entries get zero mass; rows containing +inf split their mass evenly
    across the +inf entries; rows that are entirely -inf come out uniform.
    """
    with np.errstate(over="ignore", invalid="ignore"):
        shift = np.max(data, axis=axis, keepdims=True)
        shift = np.where(np.isfinite(shift), shift, 0.0).astype(data.dtype)
        e = np.exp(data - shift)
    pos_inf = np.isposinf(data)
    if pos_inf.any():
        e = np.where(pos_inf.any(axis=axis, keepdims=True), pos_inf.astype(data.dtype), e)
    total = e.sum(axis=axis, keepdims=True)
    uniform = 1.0 / data.shape[axis]
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(total > 0, e / np.where(total > 0, total, 1.0), uniform)
    return out.astype(data.dtype)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    y = softmax_array(x.data, axis)

    def backward(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return apply_op("softmax", (x,), y, backward)


def interpolation_matrix(source: int, target: int, dtype=np.float64) -> np.ndarray:
    """Rows of bilinear weights with half-pixel centers (align_corners=False)"""
    m = np.zeros((target, source), dtype=dtype)
    ratio = source / target
    for p in range(target):
        src = max((p + 0.5) * ratio - 0.5, 0.0)
        lo = min(int(math.floor(src)), source - 1)
        hi = min(lo + 1, source - 1)
        frac = src - lo
        m[p, lo] += 1.0 - frac
        m[p, hi] += frac
    return m


def bilinear_upsample(x: Tensor, target: Tuple[int, int]) -> Tensor:
    """Resize H×W×C (or N×H×W×C) to target (H', W')"""
    th, tw = target
    if th < 1 or tw < 1:
        raise ShapeError(f"bilinear_upsample: invalid target {target}")
    squeeze = x.ndim == 3
    data = x.data[None] if squeeze else x.data
    if data.ndim != 4:
        raise ShapeError(f"bilinear_upsample: expected H×W×C or N×H×W×C, got {x.shape}")
    _, h, w, _ = data.shape
    if (h, w) == (th, tw):
        return x

    ah = interpolation_matrix(h, th, data.dtype)
    aw = interpolation_matrix(w, tw, data.dtype)
    rows = np.tensordot(ah, data, axes=([1], [1])).transpose(1, 0, 2, 3)
    out = np.tensordot(aw, rows, axes=([1], [2])).transpose(1, 2, 0, 3)

    def backward(g):
        g = g[None] if squeeze else g
        g_rows = np.tensordot(aw.T, g, axes=([1], [2])).transpose(1, 2, 0, 3)
        gx = np.tensordot(ah.T, g_rows, axes=([1], [1])).transpose(1, 0, 2, 3)
        return (gx[0] if squeeze else gx,)

    out = np.ascontiguousarray(out)
    return apply_op("bilinear_upsample", (x,), out[0] if squeeze else out, backward)
