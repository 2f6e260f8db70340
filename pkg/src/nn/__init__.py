"""Neural-network layer primitives with hand-written adjoints"""
from .conv import ConvSpec, conv2d, conv_transpose2d, depthwise_conv2d
from .functional import (
    activation,
    bilinear_upsample,
    gelu,
    interpolation_matrix,
    linear,
    relu,
    softmax,
    softmax_array,
)
from .loss import cross_entropy
from .norm import NormState, batchnorm2d, layernorm

__all__ = [
    "ConvSpec",
    "conv2d",
    "conv_transpose2d",
    "depthwise_conv2d",
    "activation",
    "bilinear_upsample",
    "gelu",
    "interpolation_matrix",
    "linear",
    "relu",
    "softmax",
    "softmax_array",
    "cross_entropy",
    "NormState",
    "batchnorm2d",
    "layernorm",
]
