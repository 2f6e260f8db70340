"""Tensor type, reverse-mode differentiation and gradient checking"""
from .tensor import (
    GradTape,
    Tensor,
    apply_op,
    backward,
    current_tape,
    is_grad_enabled,
    no_grad,
)
from .ops import (
    absolute,
    add,
    concat,
    count_macs,
    matmul,
    mean,
    mul,
    reshape,
    scale,
    sub,
    sum,
    transpose,
)
from .gradcheck import GradcheckResult, gradcheck, sample_coordinates

__all__ = [
    "GradTape",
    "Tensor",
    "apply_op",
    "backward",
    "current_tape",
    "is_grad_enabled",
    "no_grad",
    "absolute",
    "add",
    "concat",
    "count_macs",
    "matmul",
    "mean",
    "mul",
    "reshape",
    "scale",
    "sub",
    "sum",
    "transpose",
    "GradcheckResult",
    "gradcheck",
    "sample_coordinates",
]
