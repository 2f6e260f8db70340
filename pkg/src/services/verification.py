"""Gradient-check suite over every differentiable op and the end-to-end model"""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple

import numpy as np
import pandas as pd

from src.core.log import get_logger
from src.core.models import ModelConfig, StageConfig
from src.model import ChangeFormer, efficient_self_attention, mix_ffn, transformer_block
from src.nn import (
    ConvSpec,
    NormState,
    batchnorm2d,
    bilinear_upsample,
    conv2d,
    conv_transpose2d,
    cross_entropy,
    depthwise_conv2d,
    gelu,
    layernorm,
    linear,
    relu,
    softmax,
)
from src.numerics import gradcheck, ops, sample_coordinates
from src.numerics.tensor import Tensor

logger = get_logger(__name__)

MODEL_INPUT_SIZES = {"tiny": 8, "base": 32}
MAX_COORDINATES = 48
# Matrix and kernel weights of the model row are multiplied by this before the check.
# At the std-0.02 initialization input gradients sit within a few decades of
# central-difference rounding noise.
MODEL_WEIGHT_SCALE = 5.0
MODEL_ROW_NOTE = (
    "model rows use the seeded initialization with every matrix and kernel weight "
    f"multiplied by {MODEL_WEIGHT_SCALE:g}; biases and norm parameters are unchanged"
)

Case = Tuple[Callable[[Tensor], Tensor], Tensor]


def _t(rng: np.random.Generator, *shape, requires_grad: bool = False) -> Tensor:
    return Tensor(rng.standard_normal(shape), dtype=np.float64, requires_grad=requires_grad)


def _readout(y: Tensor, seed: int = 7) -> Tensor:
    """Scalar readout sum(y ⊙ r) with a fixed random r"""
    r = Tensor(np.random.default_rng(seed).standard_normal(y.shape), dtype=np.float64)
    return ops.sum(ops.mul(y, r))


def _stage_params(rng, c: int, reduction: int, prefix: str) -> dict:
    params = {}
    for name in ["attn.q", "attn.k", "attn.v", "attn.proj"] + (["attn.sr"] if reduction > 1 else []):
        rows = c * reduction if name == "attn.sr" else c
        params[f"{prefix}.{name}.weight"] = _t(rng, rows, c)
        params[f"{prefix}.{name}.bias"] = _t(rng, c)
    hidden = 4 * c
    params[f"{prefix}.ffn.fc1.weight"] = _t(rng, c, hidden)
    params[f"{prefix}.ffn.fc1.bias"] = _t(rng, hidden)
    params[f"{prefix}.ffn.dwconv.weight"] = _t(rng, 3, 3, hidden)
    params[f"{prefix}.ffn.dwconv.bias"] = _t(rng, hidden)
    params[f"{prefix}.ffn.fc2.weight"] = _t(rng, hidden, c)
    params[f"{prefix}.ffn.fc2.bias"] = _t(rng, c)
    for norm in ("norm1", "norm2"):
        params[f"{prefix}.{norm}.weight"] = Tensor(1.0 + 0.1 * rng.standard_normal(c), dtype=np.float64)
        params[f"{prefix}.{norm}.bias"] = _t(rng, c)
    return params


def build_cases(seed: int = 0, preset: str = "tiny") -> List[Tuple[str, Case]]:
    """(name, (f, x)) pairs; every f is scalar-valued and float64"""
    rng = np.random.default_rng(seed)
    cases: List[Tuple[str, Case]] = []

    w = _t(rng, 4, 5)
    cases.append(("matmul", (lambda x: _readout(ops.matmul(x, w)), _t(rng, 3, 4))))
    cases.append(("reshape", (lambda x: _readout(ops.reshape(x, (4, 6))), _t(rng, 2, 3, 4))))
    cases.append(("transpose", (lambda x: _readout(ops.transpose(x, (2, 0, 1))), _t(rng, 2, 3, 4))))
    other = _t(rng, 3, 2)
    cases.append(("concat", (lambda x: _readout(ops.concat([x, other, x], axis=-1)), _t(rng, 3, 4))))
    b = _t(rng, 4)
    cases.append(("add", (lambda x: _readout(ops.add(x, b)), _t(rng, 3, 4))))
    cases.append(("sub", (lambda x: _readout(ops.sub(b, x)), _t(rng, 3, 4))))
    cases.append(("mul", (lambda x: _readout(ops.mul(x, x)), _t(rng, 3, 4))))
    cases.append(("abs", (lambda x: _readout(ops.absolute(x)), _t(rng, 3, 4))))
    cases.append(("mean", (lambda x: _readout(ops.mean(x, axis=1)), _t(rng, 3, 4))))

    lw, lb = _t(rng, 6, 4), _t(rng, 4)
    cases.append(("linear", (lambda x: _readout(linear(x, lw, lb)), _t(rng, 2, 3, 6))))
    for k, s, p in ((7, 4, 3), (3, 2, 1), (3, 1, 1)):
        spec = ConvSpec(k, s, p, in_channels=3, out_channels=4)
        cw, cb = _t(rng, k, k, 3, 4), _t(rng, 4)
        cases.append((f"conv2d[{k},{s},{p}]",
                      (lambda x, spec=spec, cw=cw, cb=cb: _readout(conv2d(x, cw, cb, spec)), _t(rng, 8, 8, 3))))
        cases.append((f"conv2d[{k},{s},{p}].weight",
                      (lambda wt, spec=spec, xin=_t(rng, 8, 8, 3), cb=cb: _readout(conv2d(xin, wt, cb, spec)), cw)))

    dw_spec = ConvSpec(3, 1, 1, in_channels=4, out_channels=4, depthwise=True)
    dw, db = _t(rng, 3, 3, 4), _t(rng, 4)
    cases.append(("depthwise_conv2d", (lambda x: _readout(depthwise_conv2d(x, dw, db, dw_spec)), _t(rng, 5, 5, 4))))

    tspec = ConvSpec(3, 4, 0, in_channels=3, out_channels=2, output_padding=1)
    tw, tb = _t(rng, 3, 3, 3, 2), _t(rng, 2)
    cases.append(("conv_transpose2d", (lambda x: _readout(conv_transpose2d(x, tw, tb, tspec)), _t(rng, 3, 3, 3))))

    gamma = Tensor(1.0 + 0.1 * rng.standard_normal(4), dtype=np.float64)
    beta = _t(rng, 4)

    def bn(training: bool):
        def f(x):
            state = NormState(gamma, beta, 1e-5, 0.1, np.zeros(4), np.ones(4) * 1.5)
            return _readout(batchnorm2d(x, state, training))
        return f

    cases.append(("batchnorm2d.train", (bn(True), _t(rng, 2, 3, 3, 4))))
    cases.append(("batchnorm2d.eval", (bn(False), _t(rng, 2, 3, 3, 4))))
    ln_state = NormState(gamma, beta, 1e-6)
    cases.append(("layernorm", (lambda x: _readout(layernorm(x, ln_state)), _t(rng, 3, 5, 4))))
    cases.append(("gelu", (lambda x: _readout(gelu(x)), _t(rng, 3, 4))))
    cases.append(("relu", (lambda x: _readout(relu(x)), _t(rng, 3, 4))))
    cases.append(("softmax", (lambda x: _readout(softmax(x, axis=-1)), _t(rng, 3, 5))))
    cases.append(("bilinear_upsample", (lambda x: _readout(bilinear_upsample(x, (5, 7))), _t(rng, 2, 3, 2))))
    labels = rng.integers(0, 2, size=(2, 3, 3))
    cases.append(("cross_entropy", (lambda x: cross_entropy(x, labels), _t(rng, 2, 3, 3, 2))))

    stage = StageConfig(channels=8, depth=1, heads=2, reduction=4)
    blk = _stage_params(rng, 8, 4, "blk")
    cases.append(("efficient_self_attention",
                  (lambda x: _readout(efficient_self_attention(x, (4, 4), stage, blk, "blk.attn")), _t(rng, 16, 8))))
    ffn_norm = NormState(blk["blk.norm2.weight"], blk["blk.norm2.bias"], 1e-6)
    cases.append(("mix_ffn", (lambda x: _readout(mix_ffn(x, blk, "blk.ffn", norm=ffn_norm)), _t(rng, 4, 4, 8))))
    block_cfg = ModelConfig.from_preset(preset)
    cases.append(("transformer_block",
                  (lambda x: _readout(transformer_block(x, (4, 4), stage, blk, "blk", block_cfg)), _t(rng, 16, 8))))

    cases.append((model_row_name(preset), model_case(seed, preset)))
    return cases


def model_input_size(preset: str) -> int:
    """Smallest square input whose stage grids divide every reduction window"""
    return MODEL_INPUT_SIZES.get(preset, 32)


def model_row_name(preset: str) -> str:
    size = model_input_size(preset)
    return f"model.{preset}.{size}x{size}.weights_x{MODEL_WEIGHT_SCALE:g}"


def model_case(seed: int = 0, preset: str = "tiny") -> Case:
    """
    End-to-end loss of the float64 model on a small pair, gradient w.r.t. the pre image

    The model is the seeded initialization with matrix and kernel weights scaled
    by MODEL_WEIGHT_SCALE (see MODEL_ROW_NOTE).
    """
    config = ModelConfig.from_preset(preset)
    model = ChangeFormer.initialize(config, seed, dtype="float64")
    for name, tensor in model.params.items():
        if name.endswith(".weight") and tensor.ndim >= 2:
            tensor.data *= MODEL_WEIGHT_SCALE

    size = model_input_size(preset)
    rng = np.random.default_rng([seed, size])
    post = Tensor(rng.uniform(0, 1, (size, size, config.in_channels)), dtype=np.float64)
    labels = rng.integers(0, 2, size=(1, size, size))

    def f(pre: Tensor) -> Tensor:
        logits = model(pre, post, training=False, strict=False)
        return cross_entropy(ops.reshape(logits, (1, *logits.shape)), labels)

    return f, Tensor(rng.uniform(0, 1, (size, size, config.in_channels)), dtype=np.float64)


@dataclass
class GradcheckReport:
    table: pd.DataFrame
    seconds: float

    @property
    def passed(self) -> bool:
        return bool(self.table["passed"].all())

    def failures(self) -> List[str]:
        return self.table.loc[~self.table["passed"], "op"].tolist()


class VerificationService:
    """Service for running the finite-difference suite"""

    def __init__(self, epsilon: float = 1e-5, tolerance: float = 1e-4, max_coordinates: int = MAX_COORDINATES):
        self.epsilon = epsilon
        self.tolerance = tolerance
        self.max_coordinates = max_coordinates

    def run(self, seed: int = 0, preset: str = "tiny", only: Optional[List[str]] = None) -> GradcheckReport:
        """
        Check every case and collect one table row per op

        Args:
            seed: Seeds inputs, weights and sampled coordinates
            preset: Model preset for the end-to-end row
            only: Optional subset of case names

        Returns:
            GradcheckReport with columns op, max_error, tolerance, coordinates, passed, worst_index
        """
        started = time.perf_counter()
        rows = []
        for name, (f, x) in build_cases(seed, preset):
            if only is not None and name not in only:
                continue
            coords = sample_coordinates(x.shape, self.max_coordinates, seed)
            result = gradcheck(f, x, self.epsilon, self.tolerance, coords)
            rows.append({
                "op": name,
                "max_error": result.max_error,
                "tolerance": result.tolerance,
                "coordinates": result.coordinates,
                "passed": result.passed,
                "worst_index": result.nan_index or result.worst_index,
            })
            logger.debug("gradcheck %s: %.3e", name, result.max_error)
        return GradcheckReport(pd.DataFrame(rows), time.perf_counter() - started)
