"""Differentiable layout and arithmetic primitives"""
from __future__ import annotations

import threading
from collections import Counter
from contextlib import contextmanager
from typing import Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.core.errors import ShapeError
from .tensor import Tensor, apply_op, as_tensor, check_same_dtype

Axis = Union[int, Tuple[int, ...], None]


class _MacState(threading.local):
    def __init__(self):
        self.counters: List[Counter] = []


_macs = _MacState()


@contextmanager
def count_macs() -> Iterator[Counter]:
    """Count multiply-accumulates of every matmul executed inside, keyed by tag"""
    counter: Counter = Counter()
    _macs.counters.append(counter)
    try:
        yield counter
    finally:
        _macs.counters.remove(counter)


def _check_broadcast(op: str, a: Tensor, b: Tensor) -> None:
    small, large = sorted((a.shape, b.shape), key=len)
    if small != large[len(large) - len(small):]:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} are not trailing-compatible")


def _unbroadcast(g: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    lead = g.ndim - len(shape)
    return g.sum(axis=tuple(range(lead))) if lead else g


def matmul(a: Tensor, b: Tensor, tag: Optional[str] = None) -> Tensor:
    """(..., m, k) @ (..., k, n) with identical leading axes"""
    check_same_dtype("matmul", a, b)
    if a.ndim < 2 or a.ndim != b.ndim or a.shape[:-2] != b.shape[:-2] or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")

    out = np.matmul(a.data, b.data)
    if _macs.counters:
        macs = int(np.prod(a.shape[:-1])) * a.shape[-1] * b.shape[-1]
        for counter in _macs.counters:
            counter[tag or "untagged"] += macs

    def backward(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2)) if a.requires_grad else None
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g) if b.requires_grad else None
        return ga, gb

    return apply_op("matmul", (a, b), out, backward)


def reshape(x: Tensor, new_shape: Sequence[int]) -> Tensor:
    new_shape = tuple(int(d) for d in new_shape)
    if new_shape.count(-1) == 1:
        known = int(np.prod([d for d in new_shape if d != -1]))
        if known == 0 or x.size % known:
            raise ShapeError(f"reshape: cannot infer -1 in {new_shape} for shape {x.shape}")
        new_shape = tuple(x.size // known if d == -1 else d for d in new_shape)
    if int(np.prod(new_shape)) != x.size or any(d <= 0 for d in new_shape):
        raise ShapeError(f"reshape: cannot view shape {x.shape} as {new_shape}")
    if new_shape == x.shape:
        return x

    old_shape = x.shape
    return apply_op("reshape", (x,), x.data.reshape(new_shape), lambda g: (g.reshape(old_shape),))


def transpose(x: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    if sorted(axes) != list(range(x.ndim)):
        raise ShapeError(f"transpose: {axes} is not a permutation of {x.ndim} axes")
    inverse = tuple(np.argsort(axes))
    out = np.ascontiguousarray(np.transpose(x.data, axes))
    return apply_op("transpose", (x,), out, lambda g: (np.transpose(g, inverse),))


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise ShapeError("concat: empty tensor list")
    if len(tensors) == 1:
        return tensors[0]
    check_same_dtype("concat", *tensors)

    ndim = tensors[0].ndim
    axis = axis % ndim
    for t in tensors[1:]:
        if t.ndim != ndim or any(
            d1 != d2 for i, (d1, d2) in enumerate(zip(t.shape, tensors[0].shape)) if i != axis
        ):
            raise ShapeError(
                f"concat: shapes {[u.shape for u in tensors]} differ outside axis {axis}"
            )

    out = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return apply_op("concat", tuple(tensors), out, backward)


def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    check_same_dtype("add", a, b)
    _check_broadcast("add", a, b)
    return apply_op(
        "add", (a, b), a.data + b.data,
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    check_same_dtype("sub", a, b)
    _check_broadcast("sub", a, b)
    return apply_op(
        "sub", (a, b), a.data - b.data,
        lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)),
    )


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    check_same_dtype("mul", a, b)
    _check_broadcast("mul", a, b)

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return apply_op("mul", (a, b), a.data * b.data, backward)


def scale(x: Tensor, factor: float) -> Tensor:
    factor = x.dtype.type(factor)
    return apply_op("scale", (x,), x.data * factor, lambda g: (g * factor,))


def absolute(x: Tensor) -> Tensor:
    return apply_op("abs", (x,), np.abs(x.data), lambda g: (g * np.sign(x.data),))


def sum(x: Tensor, axis: Axis = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    out = np.sum(x.data, axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return apply_op("sum", (x,), np.asarray(out), backward)


def mean(x: Tensor, axis: Axis = None, keepdims: bool = False) -> Tensor:
    count = x.size if axis is None else int(np.prod([x.shape[a] for a in np.atleast_1d(axis)]))
    return scale(sum(x, axis=axis, keepdims=keepdims), 1.0 / count)


def _pair(a, b) -> Tuple[Tensor, Tensor]:
    if not isinstance(a, Tensor):
        a = as_tensor(a, like=b)
    if not isinstance(b, Tensor):
        b = as_tensor(b, like=a)
    return a, b
