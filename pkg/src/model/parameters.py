"""Parameter naming, shapes and random initialization"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np
from scipy.stats import truncnorm

from src.core.models import PATCH_EMBED_SPECS, ModelConfig
from src.nn.norm import NormState
from src.numerics.tensor import Tensor

INIT_STD = 0.02
TRUNCATION = 2.0

Params = Dict[str, Tensor]
Buffers = Dict[str, np.ndarray]


@dataclass(frozen=True)
class ParameterSpec:
    name: str
    shape: Tuple[int, ...]
    init: str  # "normal", "zeros" or "ones"


def _affine(name: str, c_in: int, c_out: int) -> List[ParameterSpec]:
    return [ParameterSpec(f"{name}.weight", (c_in, c_out), "normal"),
            ParameterSpec(f"{name}.bias", (c_out,), "zeros")]


def _norm(name: str, channels: int) -> List[ParameterSpec]:
    return [ParameterSpec(f"{name}.weight", (channels,), "ones"),
            ParameterSpec(f"{name}.bias", (channels,), "zeros")]


def _conv(name: str, kernel: int, c_in: int, c_out: int) -> List[ParameterSpec]:
    return [ParameterSpec(f"{name}.weight", (kernel, kernel, c_in, c_out), "normal"),
            ParameterSpec(f"{name}.bias", (c_out,), "zeros")]


def encoder_parameter_specs(config: ModelConfig) -> List[ParameterSpec]:
    specs: List[ParameterSpec] = []
    in_channels = config.in_channels
    for i, (stage, (kernel, _, _)) in enumerate(zip(config.stages, PATCH_EMBED_SPECS), start=1):
        c = stage.channels
        hidden = c * config.ffn_expansion
        prefix = f"encoder.stage{i}"
        specs += _conv(f"{prefix}.patch_embed.proj", kernel, in_channels, c)
        specs += _norm(f"{prefix}.patch_embed.norm", c)
        for j in range(stage.depth):
            block = f"{prefix}.block{j}"
            specs += _norm(f"{block}.norm1", c)
            specs += _affine(f"{block}.attn.q", c, c)
            specs += _affine(f"{block}.attn.k", c, c)
            specs += _affine(f"{block}.attn.v", c, c)
            if stage.reduction > 1:
                specs += _affine(f"{block}.attn.sr", c * stage.reduction, c)
            specs += _affine(f"{block}.attn.proj", c, c)
            specs += _norm(f"{block}.norm2", c)
            specs += _affine(f"{block}.ffn.fc1", c, hidden)
            specs += [ParameterSpec(f"{block}.ffn.dwconv.weight", (3, 3, hidden), "normal"),
                      ParameterSpec(f"{block}.ffn.dwconv.bias", (hidden,), "zeros")]
            specs += _affine(f"{block}.ffn.fc2", hidden, c)
        specs += _norm(f"{prefix}.norm", c)
        in_channels = c
    return specs


def decoder_parameter_specs(config: ModelConfig) -> List[ParameterSpec]:
    specs: List[ParameterSpec] = []
    embed = config.decoder.embed_dim
    for i, c in enumerate(config.channels, start=1):
        if config.decoder.difference_mode == "learned":
            specs += _conv(f"decoder.diff{i}.conv", 3, 2 * c, c)
            specs += _norm(f"decoder.diff{i}.bn", c)
        specs += _affine(f"decoder.linear{i}", c, embed)
    specs += _affine("decoder.fuse", 4 * embed, embed)
    specs += _conv("decoder.upsample", 3, embed, embed)
    specs += _affine("decoder.classifier", embed, config.decoder.num_classes)
    return specs


def parameter_specs(config: ModelConfig) -> List[ParameterSpec]:
    return encoder_parameter_specs(config) + decoder_parameter_specs(config)


def buffer_specs(config: ModelConfig) -> List[ParameterSpec]:
    if config.decoder.difference_mode != "learned":
        return []
    specs = []
    for i, c in enumerate(config.channels, start=1):
        specs.append(ParameterSpec(f"decoder.diff{i}.bn.running_mean", (c,), "zeros"))
        specs.append(ParameterSpec(f"decoder.diff{i}.bn.running_var", (c,), "ones"))
    return specs


def truncated_normal(rng: np.random.Generator, shape, std: float = INIT_STD, dtype="float32") -> np.ndarray:
    """Normal(0, std) truncated at ±2 std"""
    values = truncnorm.rvs(-TRUNCATION, TRUNCATION, loc=0.0, scale=std, size=shape, random_state=rng)
    return np.asarray(values, dtype=dtype).reshape(shape)


def _fill(spec: ParameterSpec, rng: np.random.Generator, dtype) -> np.ndarray:
    if spec.init == "normal":
        return truncated_normal(rng, spec.shape, dtype=dtype)
    if spec.init == "ones":
        return np.ones(spec.shape, dtype=dtype)
    return np.zeros(spec.shape, dtype=dtype)


def init_weights(config: ModelConfig, seed: int, dtype: str = "float32") -> Params:
    """Weights from a truncated normal (std 0.02), biases zero, norm scales one"""
    rng = np.random.default_rng(seed)
    return {
        spec.name: Tensor(_fill(spec, rng, dtype), requires_grad=True, name=spec.name)
        for spec in parameter_specs(config)
    }


def init_buffers(config: ModelConfig, dtype: str = "float32") -> Buffers:
    rng = np.random.default_rng(0)
    return {spec.name: _fill(spec, rng, dtype) for spec in buffer_specs(config)}


def norm_state(params: Params, name: str, eps: float, buffers: Buffers = None, momentum: float = 0.1) -> NormState:
    """View a named norm's parameters (and running statistics, if any) as a NormState"""
    buffers = buffers or {}
    return NormState(
        weight=params[f"{name}.weight"],
        bias=params[f"{name}.bias"],
        eps=eps,
        momentum=momentum,
        running_mean=buffers.get(f"{name}.running_mean"),
        running_var=buffers.get(f"{name}.running_var"),
    )


def count_parameters(params: Params, prefix: str = "") -> int:
    return sum(t.size for name, t in params.items() if name.startswith(prefix))
