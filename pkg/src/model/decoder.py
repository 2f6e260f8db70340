"""Difference modules and the lightweight MLP decoder"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from src.core.errors import ShapeError
from src.core.models import ModelConfig
from src.nn import ConvSpec, batchnorm2d, bilinear_upsample, conv2d, conv_transpose2d, linear, relu
from src.numerics import ops
from src.numerics.tensor import Tensor
from .encoder import FeaturePyramid
from .parameters import Buffers, Params, norm_state

# Transposed conv: K=3, S=4 with P=0, OP=1 gives exactly 4x upsampling
UPSAMPLE_KERNEL, UPSAMPLE_STRIDE, UPSAMPLE_PADDING, UPSAMPLE_OUTPUT_PADDING = 3, 4, 0, 1


@dataclass
class DifferencePyramid:
    """F_diff^1..F_diff^4, aligned with the encoder pyramid"""
    levels: List[Tensor]

    def __post_init__(self):
        if len(self.levels) != 4:
            raise ShapeError(f"difference pyramid needs 4 levels, got {len(self.levels)}")


def difference(f_pre: Tensor, f_post: Tensor, level: int, params: Params, buffers: Buffers,
               config: ModelConfig, training: bool = False) -> Tensor:
    """BN(ReLU(Conv3×3(Cat(F_pre, F_post)))); `absolute` mode gives |F_pre − F_post|"""
    if f_pre.shape != f_post.shape:
        raise ShapeError(f"difference: pre {f_pre.shape} and post {f_post.shape} differ")
    if config.decoder.difference_mode == "absolute":
        return ops.absolute(ops.sub(f_pre, f_post))

    squeeze = f_pre.ndim == 3
    if squeeze:
        f_pre, f_post = ops.reshape(f_pre, (1, *f_pre.shape)), ops.reshape(f_post, (1, *f_post.shape))
    c = f_pre.shape[-1]
    prefix = f"decoder.diff{level}"
    spec = ConvSpec(3, 1, 1, in_channels=2 * c, out_channels=c)
    y = conv2d(ops.concat([f_pre, f_post], axis=-1), params[f"{prefix}.conv.weight"],
               params[f"{prefix}.conv.bias"], spec)
    y = relu(y)
    state = norm_state(params, f"{prefix}.bn", config.bn_eps, buffers, config.bn_momentum)
    y = batchnorm2d(y, state, training)
    return ops.reshape(y, y.shape[1:]) if squeeze else y


def unify_and_upsample(f_diff: Tensor, level: int, target: Tuple[int, int], params: Params) -> Tensor:
    """Linear(C_i, C_ebd) then bilinear resize to (H/4, W/4)"""
    y = linear(f_diff, params[f"decoder.linear{level}.weight"], params[f"decoder.linear{level}.bias"])
    return bilinear_upsample(y, target)


def fuse(levels: Sequence[Tensor], params: Params) -> Tensor:
    """Linear(4·C_ebd, C_ebd) over the channel concatenation of levels 1..4"""
    if len(levels) != 4:
        raise ShapeError(f"fuse needs 4 levels, got {len(levels)}")
    shapes = {t.shape for t in levels}
    if len(shapes) != 1:
        raise ShapeError(f"fuse: level shapes differ: {[t.shape for t in levels]}")
    return linear(ops.concat(list(levels), axis=-1), params["decoder.fuse.weight"], params["decoder.fuse.bias"])


def upsample_and_classify(f: Tensor, params: Params) -> Tensor:
    """ConvTranspose2D(S=4, K=3) to H×W, then per-pixel Linear(C_ebd, N_cls)"""
    weight = params["decoder.upsample.weight"]
    spec = ConvSpec(
        UPSAMPLE_KERNEL, UPSAMPLE_STRIDE, UPSAMPLE_PADDING,
        in_channels=weight.shape[2], out_channels=weight.shape[3],
        output_padding=UPSAMPLE_OUTPUT_PADDING,
    )
    y = conv_transpose2d(f, weight, params["decoder.upsample.bias"], spec)
    return linear(y, params["decoder.classifier.weight"], params["decoder.classifier.bias"])


def uncovered_pixels(height: int, width: int) -> np.ndarray:
    """
    Output pixels of the 4x upsampling that no kernel tap reaches

    With K=3 and S=4 every fourth row and column (index 3 mod 4) only receives
    the upsample bias, so their logits are the same for every input.

    Returns:
        Boolean H×W mask, True where the pixel is uncovered
    """
    if height % UPSAMPLE_STRIDE or width % UPSAMPLE_STRIDE:
        raise ShapeError(f"uncovered_pixels: {height}x{width} is not a multiple of {UPSAMPLE_STRIDE}")
    spec = ConvSpec(UPSAMPLE_KERNEL, UPSAMPLE_STRIDE, UPSAMPLE_PADDING, in_channels=1, out_channels=1,
                    output_padding=UPSAMPLE_OUTPUT_PADDING)
    ones = Tensor(np.ones((height // UPSAMPLE_STRIDE, width // UPSAMPLE_STRIDE, 1)), dtype=np.float64)
    kernel = Tensor(np.ones((UPSAMPLE_KERNEL, UPSAMPLE_KERNEL, 1, 1)), dtype=np.float64)
    return conv_transpose2d(ones, kernel, None, spec).data[..., 0] == 0


def decode(pyr_pre: FeaturePyramid, pyr_post: FeaturePyramid, params: Params, buffers: Buffers,
           config: ModelConfig, training: bool = False) -> Tensor:
    """Two pyramids -> change logits at input resolution"""
    if pyr_pre.spatial_sizes != pyr_post.spatial_sizes or pyr_pre.channels != pyr_post.channels:
        raise ShapeError(
            f"decode: pyramids are not level-aligned ({pyr_pre.spatial_sizes} vs {pyr_post.spatial_sizes})"
        )
    target = pyr_pre.spatial_sizes[0]
    diffs = DifferencePyramid([
        difference(pre, post, level, params, buffers, config, training)
        for level, (pre, post) in enumerate(zip(pyr_pre.features, pyr_post.features), start=1)
    ])
    unified = [
        unify_and_upsample(f_diff, level, target, params)
        for level, f_diff in enumerate(diffs.levels, start=1)
    ]
    return upsample_and_classify(fuse(unified, params), params)
