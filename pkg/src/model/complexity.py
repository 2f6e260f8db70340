"""Multiply-accumulate accounting for sequence-reduction attention"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np

from src.core.models import StageConfig
from src.numerics import count_macs, no_grad
from src.numerics.tensor import Tensor
from .encoder import efficient_self_attention
from .parameters import truncated_normal

ATTENTION_TAGS = ("attention.scores", "attention.values")
REDUCTION_TAG = "attention.reduction"


@dataclass
class AttentionMacs:
    scores: int
    values: int
    reduction: int

    @property
    def attention(self) -> int:
        """Score + value products; the sequence-reduction linear is reported separately"""
        return self.scores + self.values


def attention_macs(tokens: int, channels: int, reduction: int) -> AttentionMacs:
    """Closed form: HW·(HW/R)·C for QKᵀ and again for ·V, summed over heads"""
    keys = tokens // reduction
    return AttentionMacs(
        scores=tokens * keys * channels,
        values=tokens * keys * channels,
        reduction=keys * (channels * reduction) * channels if reduction > 1 else 0,
    )


def _attention_params(channels: int, reduction: int, seed: int, prefix: str) -> Dict[str, Tensor]:
    rng = np.random.default_rng(seed)
    params = {}
    names = ["q", "k", "v", "proj"] + (["sr"] if reduction > 1 else [])
    for name in names:
        rows = channels * reduction if name == "sr" else channels
        params[f"{prefix}.{name}.weight"] = Tensor(truncated_normal(rng, (rows, channels)))
        params[f"{prefix}.{name}.bias"] = Tensor(np.zeros(channels, dtype=np.float32))
    return params


def measure_attention_macs(hw: Tuple[int, int], channels: int, heads: int, reduction: int,
                           seed: int = 0) -> AttentionMacs:
    """Run one attention layer on random tokens and read the matmul counters"""
    stage = StageConfig(channels=channels, depth=1, heads=heads, reduction=reduction)
    prefix = "measure.attn"
    params = _attention_params(channels, reduction, seed, prefix)
    tokens = hw[0] * hw[1]
    x = Tensor(np.random.default_rng(seed + 1).standard_normal((tokens, channels)).astype(np.float32))
    with no_grad(), count_macs() as counter:
        efficient_self_attention(x, hw, stage, params, prefix)
    return AttentionMacs(
        scores=counter[ATTENTION_TAGS[0]],
        values=counter[ATTENTION_TAGS[1]],
        reduction=counter[REDUCTION_TAG],
    )
