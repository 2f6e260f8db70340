"""Convolutions over channels-last (N×H×W×C) tensors.

All three convolutions use cross-correlation semantics (no kernel flip) and
weights laid out as (K, K, C_in, C_out); depthwise weights are (K, K, C).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from src.core.errors import ConfigError, ShapeError
from src.numerics.tensor import Tensor, apply_op, check_same_dtype


@dataclass(frozen=True)
class ConvSpec:
    kernel: int
    stride: int = 1
    padding: int = 0
    in_channels: int = 1
    out_channels: int = 1
    output_padding: int = 0
    depthwise: bool = False

    def __post_init__(self):
        if self.kernel < 1 or self.stride < 1:
            raise ConfigError(f"kernel and stride must be >= 1, got K={self.kernel} S={self.stride}")
        if self.padding < 0 or self.output_padding < 0:
            raise ConfigError(f"padding must be >= 0, got P={self.padding} OP={self.output_padding}")
        if self.depthwise and self.in_channels != self.out_channels:
            raise ConfigError(
                f"depthwise conv needs in_channels == out_channels, got {self.in_channels} -> {self.out_channels}"
            )

    def output_size(self, size: int) -> int:
        return (size + 2 * self.padding - self.kernel) // self.stride + 1

    def transposed_output_size(self, size: int) -> int:
        return (size - 1) * self.stride - 2 * self.padding + self.kernel + self.output_padding


def _batched(x: Tensor) -> Tuple[np.ndarray, bool]:
    if x.ndim == 3:
        return x.data[None], True
    if x.ndim == 4:
        return x.data, False
    raise ShapeError(f"expected H×W×C or N×H×W×C input, got shape {x.shape}")


def _unbatch(out: np.ndarray, squeeze: bool) -> np.ndarray:
    return out[0] if squeeze else out


def _pad(x: np.ndarray, p: int) -> np.ndarray:
    if p == 0:
        return x
    return np.pad(x, ((0, 0), (p, p), (p, p), (0, 0)))


def _window(i: int, stride: int, count: int) -> slice:
    return slice(i, i + stride * (count - 1) + 1, stride)


def _im2col(xp: np.ndarray, k: int, s: int, ho: int, wo: int) -> np.ndarray:
    n, _, _, c = xp.shape
    windows = sliding_window_view(xp, (k, k), axis=(1, 2))[:, ::s, ::s][:, :ho, :wo]
    return windows.transpose(0, 1, 2, 4, 5, 3).reshape(n * ho * wo, k * k * c)


def _col2im(cols: np.ndarray, padded_shape, k: int, s: int, ho: int, wo: int) -> np.ndarray:
    n, _, _, c = padded_shape
    cols = cols.reshape(n, ho, wo, k, k, c)
    out = np.zeros(padded_shape, dtype=cols.dtype)
    for i in range(k):
        for j in range(k):
            out[:, _window(i, s, ho), _window(j, s, wo), :] += cols[:, :, :, i, j, :]
    return out


def _conv2d_grad_input(g2d, w2d, padded_shape, spec: ConvSpec, ho: int, wo: int) -> np.ndarray:
    gxp = _col2im(g2d @ w2d.T, padded_shape, spec.kernel, spec.stride, ho, wo)
    p = spec.padding
    return gxp[:, p:gxp.shape[1] - p, p:gxp.shape[2] - p, :] if p else gxp


def conv2d(x: Tensor, weight: Tensor, bias: Optional[Tensor], spec: ConvSpec) -> Tensor:
    """H' = floor((H + 2P − K)/S) + 1"""
    tensors = (x, weight) if bias is None else (x, weight, bias)
    check_same_dtype("conv2d", *tensors)
    k = spec.kernel
    if weight.shape != (k, k, spec.in_channels, spec.out_channels):
        raise ShapeError(f"conv2d: weight shape {weight.shape} does not match {spec}")
    data, squeeze = _batched(x)
    n, h, w, c = data.shape
    if c != spec.in_channels:
        raise ShapeError(f"conv2d: input has {c} channels, spec expects {spec.in_channels}")
    if h + 2 * spec.padding < k or w + 2 * spec.padding < k:
        raise ShapeError(f"conv2d: kernel {k} larger than padded input {h}x{w} (P={spec.padding})")

    ho, wo = spec.output_size(h), spec.output_size(w)
    xp = _pad(data, spec.padding)
    cols = _im2col(xp, k, spec.stride, ho, wo)
    w2d = weight.data.reshape(k * k * c, spec.out_channels)
    out = cols @ w2d
    if bias is not None:
        out = out + bias.data
    out = _unbatch(out.reshape(n, ho, wo, spec.out_channels), squeeze)

    def backward(g):
        g2d = (g[None] if squeeze else g).reshape(n * ho * wo, spec.out_channels)
        gx = _conv2d_grad_input(g2d, w2d, xp.shape, spec, ho, wo) if x.requires_grad else None
        gw = (cols.T @ g2d).reshape(weight.shape) if weight.requires_grad else None
        grads = [_unbatch(gx, squeeze) if gx is not None else None, gw]
        if bias is not None:
            grads.append(g2d.sum(axis=0))
        return grads

    return apply_op("conv2d", tensors, out, backward)


def depthwise_conv2d(x: Tensor, weight: Tensor, bias: Optional[Tensor], spec: ConvSpec) -> Tensor:
    """One K×K filter per channel"""
    if not spec.depthwise:
        raise ConfigError("depthwise_conv2d needs a depthwise spec")
    tensors = (x, weight) if bias is None else (x, weight, bias)
    check_same_dtype("depthwise_conv2d", *tensors)
    k = spec.kernel
    data, squeeze = _batched(x)
    n, h, w, c = data.shape
    if c != spec.in_channels or weight.shape != (k, k, c):
        raise ShapeError(
            f"depthwise_conv2d: input channels {c}, weight {weight.shape}, spec channels {spec.in_channels}"
        )
    if h + 2 * spec.padding < k or w + 2 * spec.padding < k:
        raise ShapeError(f"depthwise_conv2d: kernel {k} larger than padded input {h}x{w}")

    s = spec.stride
    ho, wo = spec.output_size(h), spec.output_size(w)
    xp = _pad(data, spec.padding)
    out = np.zeros((n, ho, wo, c), dtype=data.dtype)
    for i in range(k):
        for j in range(k):
            out += xp[:, _window(i, s, ho), _window(j, s, wo), :] * weight.data[i, j]
    if bias is not None:
        out += bias.data

    def backward(g):
        g = g[None] if squeeze else g
        gxp = np.zeros_like(xp) if x.requires_grad else None
        gw = np.zeros_like(weight.data)
        for i in range(k):
            for j in range(k):
                rows, cols_ = _window(i, s, ho), _window(j, s, wo)
                gw[i, j] = np.sum(g * xp[:, rows, cols_, :], axis=(0, 1, 2))
                if gxp is not None:
                    gxp[:, rows, cols_, :] += g * weight.data[i, j]
        gx = None
        if gxp is not None:
            p = spec.padding
            gx = gxp[:, p:p + h, p:p + w, :]
            gx = _unbatch(gx, squeeze)
        grads = [gx, gw]
        if bias is not None:
            grads.append(g.sum(axis=(0, 1, 2)))
        return grads

    return apply_op("depthwise_conv2d", tensors, _unbatch(out, squeeze), backward)


def conv_transpose2d(x: Tensor, weight: Tensor, bias: Optional[Tensor], spec: ConvSpec) -> Tensor:
    """H' = (H − 1)·S − 2P + K + OP; the adjoint of conv2d's data path"""
    if spec.output_padding >= spec.stride:
        raise ConfigError(
            f"output_padding {spec.output_padding} must be smaller than stride {spec.stride}"
        )
    tensors = (x, weight) if bias is None else (x, weight, bias)
    check_same_dtype("conv_transpose2d", *tensors)
    k, s, p = spec.kernel, spec.stride, spec.padding
    if weight.shape != (k, k, spec.in_channels, spec.out_channels):
        raise ShapeError(f"conv_transpose2d: weight shape {weight.shape} does not match {spec}")
    data, squeeze = _batched(x)
    n, h, w, c = data.shape
    if c != spec.in_channels:
        raise ShapeError(f"conv_transpose2d: input has {c} channels, spec expects {spec.in_channels}")

    ho, wo = spec.transposed_output_size(h), spec.transposed_output_size(w)
    if ho < 1 or wo < 1:
        raise ShapeError(f"conv_transpose2d: empty output for input {h}x{w} and {spec}")
    full_h, full_w = (h - 1) * s + k + spec.output_padding, (w - 1) * s + k + spec.output_padding
    full = np.zeros((n, full_h, full_w, spec.out_channels), dtype=data.dtype)
    for i in range(k):
        for j in range(k):
            full[:, _window(i, s, h), _window(j, s, w), :] += data @ weight.data[i, j]
    out = full[:, p:p + ho, p:p + wo, :]
    if bias is not None:
        out = out + bias.data

    def backward(g):
        g = g[None] if squeeze else g
        g_full = np.zeros_like(full)
        g_full[:, p:p + ho, p:p + wo, :] = g
        gx = np.zeros_like(data) if x.requires_grad else None
        gw = np.zeros_like(weight.data)
        for i in range(k):
            for j in range(k):
                patch = g_full[:, _window(i, s, h), _window(j, s, w), :]
                gw[i, j] = np.tensordot(data, patch, axes=([0, 1, 2], [0, 1, 2]))
                if gx is not None:
                    gx += patch @ weight.data[i, j].T
        grads = [_unbatch(gx, squeeze) if gx is not None else None, gw]
        if bias is not None:
            grads.append(g.sum(axis=(0, 1, 2)))
        return grads

    return apply_op("conv_transpose2d", tensors, _unbatch(np.ascontiguousarray(out), squeeze), backward)
