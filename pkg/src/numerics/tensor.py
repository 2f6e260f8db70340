"""Dense tensor with define-by-run reverse-mode differentiation"""
from __future__ import annotations

import threading
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from src.core.errors import DTypeError, ShapeError

SUPPORTED_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Tensor:
    """Row-major float32/float64 array with an optional gradient buffer"""

    __slots__ = ("data", "requires_grad", "grad", "name", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: Optional[str] = None):
        if isinstance(data, Tensor):
            data = data.data
        if dtype is None:
            dtype = data.dtype if isinstance(data, np.ndarray) and data.dtype in SUPPORTED_DTYPES else np.float32
        dtype = np.dtype(dtype)
        if dtype not in SUPPORTED_DTYPES:
            raise DTypeError(f"unsupported dtype {dtype}; expected float32 or float64")

        self.data = np.ascontiguousarray(data, dtype=dtype)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data, dtype=self.dtype)

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate_grad(self, g: np.ndarray) -> None:
        if g.shape != self.data.shape:
            raise ShapeError(f"gradient shape {g.shape} does not match tensor shape {self.data.shape}")
        if self.grad is None:
            self.grad = np.array(g, dtype=self.dtype, copy=True)
        else:
            self.grad += g

    def backward(self) -> None:
        backward(self)

    # Operator sugar; implementations live in ops.py
    def __add__(self, other):
        from .ops import add
        return add(self, other)

    def __radd__(self, other):
        from .ops import add
        return add(other, self)

    def __sub__(self, other):
        from .ops import sub
        return sub(self, other)

    def __mul__(self, other):
        from .ops import mul, scale
        if isinstance(other, (int, float)):
            return scale(self, other)
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from .ops import scale
        return scale(self, -1.0)

    def __matmul__(self, other):
        from .ops import matmul
        return matmul(self, other)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"


@dataclass
class TapeEntry:
    """One executed operation"""
    name: str
    inputs: Tuple[Tensor, ...]
    output: Tensor
    backward: BackwardFn


class GradTape:
    """Ordered record of executed operations; confined to the thread that created it"""

    def __init__(self):
        self.entries: List[TapeEntry] = []
        self._owner = threading.get_ident()

    def __len__(self) -> int:
        return len(self.entries)

    def record(self, entry: TapeEntry) -> None:
        if threading.get_ident() != self._owner:
            raise RuntimeError("GradTape used from a thread other than its owner")
        self.entries.append(entry)

    def clear(self) -> None:
        self.entries.clear()

    def __enter__(self) -> "GradTape":
        _state().tapes.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _state().tapes.pop()

    def backward(self, loss: Tensor, retain: bool = False) -> None:
        """Replay adjoints in reverse; gradients accumulate into `.grad`"""
        if loss.size != 1:
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")

        produced = {id(e.output) for e in self.entries}
        if id(loss) not in produced and not loss.requires_grad:
            raise ShapeError("loss is not connected to the gradient tape")

        grads: Dict[int, np.ndarray] = {id(loss): np.ones(loss.shape, dtype=loss.dtype)}
        tensors: Dict[int, Tensor] = {id(loss): loss}

        for entry in reversed(self.entries):
            g_out = grads.pop(id(entry.output), None)
            if g_out is None:
                continue
            entry.output.accumulate_grad(g_out)
            input_grads = entry.backward(g_out)
            for tensor, g in zip(entry.inputs, input_grads):
                if g is None or not tensor.requires_grad:
                    continue
                key = id(tensor)
                if key in grads:
                    grads[key] = grads[key] + g
                else:
                    grads[key] = g
                    tensors[key] = tensor

        # Whatever remains was never produced on the tape: leaves
        for key, g in grads.items():
            tensors[key].accumulate_grad(g)

        if not retain:
            self.clear()


class _ThreadState(threading.local):
    def __init__(self):
        self.tapes: List[GradTape] = []
        self.enabled = True


_local = _ThreadState()


def _state() -> _ThreadState:
    return _local


def current_tape() -> Optional[GradTape]:
    """Innermost active tape; None outside every `with GradTape()` block"""
    tapes = _state().tapes
    return tapes[-1] if tapes else None


def is_grad_enabled() -> bool:
    return _state().enabled


@contextmanager
def no_grad() -> Iterator[None]:
    """Disable recording; outputs never require grad"""
    state = _state()
    previous = state.enabled
    state.enabled = False
    try:
        yield
    finally:
        state.enabled = previous


def backward(loss: Tensor, retain: bool = False) -> None:
    tape = current_tape()
    if tape is None:
        raise ShapeError("backward outside a GradTape: run the forward pass inside `with GradTape()`")
    tape.backward(loss, retain=retain)


def as_tensor(value, like: Optional[Tensor] = None) -> Tensor:
    if isinstance(value, Tensor):
        return value
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(value), dtype=dtype)


def check_same_dtype(op: str, *tensors: Tensor) -> np.dtype:
    dtypes = {t.dtype for t in tensors}
    if len(dtypes) > 1:
        raise DTypeError(f"{op}: mixed dtypes {sorted(str(d) for d in dtypes)}")
    return tensors[0].dtype


def apply_op(name: str, inputs: Sequence[Tensor], out: np.ndarray, backward_fn: BackwardFn) -> Tensor:
    """Wrap a forward result and record its adjoint when any input needs grad"""
    requires = is_grad_enabled() and any(t.requires_grad for t in inputs)
    result = Tensor(out, requires_grad=requires, dtype=inputs[0].dtype if inputs else None)
    tape = current_tape()
    # Without an active tape nothing is kept alive
    if requires and tape is not None:
        tape.record(TapeEntry(name, tuple(inputs), result, backward_fn))
    return result
