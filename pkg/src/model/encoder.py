"""Hierarchical transformer encoder.

Four stages of overlapped patch embedding followed by transformer blocks
(sequence-reduction attention + Mix-FFN). Functions are pure in their
weights, so the two Siamese branches share one parameter dictionary.
Tensors are channels-last; token sequences are N×(HW)×C in row-major
spatial order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

from src.core.errors import ShapeError
from src.core.models import PATCH_EMBED_SPECS, SIZE_MULTIPLE, ModelConfig, StageConfig
from src.nn import ConvSpec, conv2d, depthwise_conv2d, gelu, layernorm, linear, softmax
from src.nn.norm import NormState
from src.numerics import ops
from src.numerics.tensor import Tensor
from .parameters import Params, norm_state


@dataclass
class FeaturePyramid:
    """Per-stage feature maps F_1..F_4 of one image (or one batch of images)"""
    features: List[Tensor]

    def __post_init__(self):
        if len(self.features) != 4:
            raise ShapeError(f"feature pyramid needs 4 levels, got {len(self.features)}")

    def __getitem__(self, level: int) -> Tensor:
        return self.features[level]

    def __len__(self) -> int:
        return len(self.features)

    @property
    def spatial_sizes(self) -> List[Tuple[int, int]]:
        return [tuple(f.shape[-3:-1]) for f in self.features]

    @property
    def channels(self) -> List[int]:
        return [f.shape[-1] for f in self.features]


def _with_batch(x: Tensor, ndim: int) -> Tuple[Tensor, bool]:
    if x.ndim == ndim - 1:
        return ops.reshape(x, (1, *x.shape)), True
    if x.ndim != ndim:
        raise ShapeError(f"expected a {ndim - 1}-D or {ndim}-D tensor, got shape {x.shape}")
    return x, False


def _drop_batch(x: Tensor, squeeze: bool) -> Tensor:
    return ops.reshape(x, x.shape[1:]) if squeeze else x


def patch_embed(x: Tensor, stage_index: int, params: Params, config: ModelConfig) -> Tensor:
    """Overlapped downsampling conv ((7,4,3) at stage 1, (3,2,1) after) + LayerNorm"""
    if stage_index not in (1, 2, 3, 4):
        raise ShapeError(f"stage_index must be 1..4, got {stage_index}")
    kernel, stride, padding = PATCH_EMBED_SPECS[stage_index - 1]
    prefix = f"encoder.stage{stage_index}.patch_embed"
    weight = params[f"{prefix}.proj.weight"]
    spec = ConvSpec(kernel, stride, padding, in_channels=weight.shape[2], out_channels=weight.shape[3])
    y = conv2d(x, weight, params[f"{prefix}.proj.bias"], spec)
    return layernorm(y, norm_state(params, f"{prefix}.norm", config.ln_eps))


def sequence_reduce(s: Tensor, reduction: int, hw: Tuple[int, int], weight: Tensor,
                    bias: Optional[Tensor] = None) -> Tensor:
    """Fold √R×√R spatial windows into channels (HW/R, C·R), then Linear(C·R, C)"""
    s, squeeze = _with_batch(s, 3)
    n, length, c = s.shape
    h, w = hw
    r = math.isqrt(reduction)
    if r * r != reduction:
        raise ShapeError(f"reduction ratio {reduction} is not a perfect square")
    if h * w != length:
        raise ShapeError(f"sequence length {length} does not match spatial size {h}x{w}")
    if length % reduction or h % r or w % r:
        raise ShapeError(f"sequence of {h}x{w} tokens is not divisible by reduction {reduction} ({r}x{r} windows)")

    folded = ops.reshape(s, (n, h // r, r, w // r, r, c))
    folded = ops.transpose(folded, (0, 1, 3, 2, 4, 5))
    folded = ops.reshape(folded, (n, length // reduction, c * reduction))
    return _drop_batch(linear(folded, weight, bias, tag="attention.reduction"), squeeze)


def _heads(x: Tensor, heads: int, keys: bool = False) -> Tensor:
    n, length, c = x.shape
    x = ops.reshape(x, (n, length, heads, c // heads))
    return ops.transpose(x, (0, 2, 3, 1) if keys else (0, 2, 1, 3))


def efficient_self_attention(x: Tensor, hw: Tuple[int, int], stage: StageConfig, params: Params,
                             prefix: str, return_attention: bool = False):
    """Multi-head Softmax(QKᵀ/√d_head)·V with K, V taken from the reduced sequence"""
    x, squeeze = _with_batch(x, 3)
    n, length, c = x.shape
    if c != stage.channels:
        raise ShapeError(f"attention input has {c} channels, stage expects {stage.channels}")

    q = linear(x, params[f"{prefix}.q.weight"], params[f"{prefix}.q.bias"])
    if stage.reduction > 1:
        source = sequence_reduce(x, stage.reduction, hw, params[f"{prefix}.sr.weight"], params[f"{prefix}.sr.bias"])
    else:
        if hw[0] * hw[1] != length:
            raise ShapeError(f"sequence length {length} does not match spatial size {hw}")
        source = x
    k = linear(source, params[f"{prefix}.k.weight"], params[f"{prefix}.k.bias"])
    v = linear(source, params[f"{prefix}.v.weight"], params[f"{prefix}.v.bias"])

    scores = ops.matmul(_heads(q, stage.heads), _heads(k, stage.heads, keys=True), tag="attention.scores")
    attention = softmax(ops.scale(scores, 1.0 / math.sqrt(stage.head_dim)), axis=-1)
    context = ops.matmul(attention, _heads(v, stage.heads), tag="attention.values")
    context = ops.reshape(ops.transpose(context, (0, 2, 1, 3)), (n, length, c))
    out = _drop_batch(linear(context, params[f"{prefix}.proj.weight"], params[f"{prefix}.proj.bias"]), squeeze)

    if return_attention:
        return out, attention
    return out


def mix_ffn(x: Tensor, params: Params, prefix: str, norm: Optional[NormState] = None) -> Tensor:
    """F_out = MLP(GELU(DWConv3×3(MLP(F_in)))) + F_in, with optional pre-norm on the branch"""
    x, squeeze = _with_batch(x, 4)
    h = layernorm(x, norm) if norm is not None else x
    h = linear(h, params[f"{prefix}.fc1.weight"], params[f"{prefix}.fc1.bias"])
    hidden = h.shape[-1]
    spec = ConvSpec(3, 1, 1, in_channels=hidden, out_channels=hidden, depthwise=True)
    h = depthwise_conv2d(h, params[f"{prefix}.dwconv.weight"], params[f"{prefix}.dwconv.bias"], spec)
    h = gelu(h)
    h = linear(h, params[f"{prefix}.fc2.weight"], params[f"{prefix}.fc2.bias"])
    return _drop_batch(ops.add(x, h), squeeze)


def transformer_block(x: Tensor, hw: Tuple[int, int], stage: StageConfig, params: Params,
                      prefix: str, config: ModelConfig) -> Tensor:
    """x + ESA(LN(x)), then Mix-FFN (which carries its own residual) on the spatial view"""
    x, squeeze = _with_batch(x, 3)
    n, length, c = x.shape
    attn_in = layernorm(x, norm_state(params, f"{prefix}.norm1", config.ln_eps))
    x = ops.add(x, efficient_self_attention(attn_in, hw, stage, params, f"{prefix}.attn"))

    spatial = ops.reshape(x, (n, hw[0], hw[1], c))
    spatial = mix_ffn(spatial, params, f"{prefix}.ffn", norm=norm_state(params, f"{prefix}.norm2", config.ln_eps))
    return _drop_batch(ops.reshape(spatial, (n, length, c)), squeeze)


def check_input_size(height: int, width: int) -> None:
    if height % SIZE_MULTIPLE or width % SIZE_MULTIPLE:
        raise ShapeError(f"input size {height}x{width} must be divisible by {SIZE_MULTIPLE}")


def encode(image: Tensor, config: ModelConfig, params: Params, strict: bool = True) -> FeaturePyramid:
    """Image H×W×C_in (or batch) -> pyramid at H/4, H/8, H/16, H/32"""
    x, squeeze = _with_batch(image, 4)
    if x.shape[-1] != config.in_channels:
        raise ShapeError(f"image has {x.shape[-1]} channels, model expects {config.in_channels}")
    if strict:
        check_input_size(x.shape[1], x.shape[2])

    features = []
    for i, stage in enumerate(config.stages, start=1):
        x = patch_embed(x, i, params, config)
        n, h, w, c = x.shape
        tokens = ops.reshape(x, (n, h * w, c))
        for j in range(stage.depth):
            tokens = transformer_block(tokens, (h, w), stage, params, f"encoder.stage{i}.block{j}", config)
        tokens = layernorm(tokens, norm_state(params, f"encoder.stage{i}.norm", config.ln_eps))
        x = ops.reshape(tokens, (n, h, w, c))
        features.append(_drop_batch(x, squeeze))
    return FeaturePyramid(features)
