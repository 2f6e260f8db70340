"""Siamese ChangeFormer: one shared encoder, four difference modules, MLP decoder"""
from __future__ import annotations

from typing import Dict, Iterator, Optional, Tuple

import numpy as np

from src.core.errors import ShapeError
from src.core.models import ModelConfig
from src.numerics.tensor import Tensor, no_grad
from .decoder import decode
from .encoder import FeaturePyramid, encode
from .parameters import Buffers, Params, count_parameters, init_buffers, init_weights


class ChangeFormer:
    """Weights, running statistics and config of one change-detection network"""

    def __init__(self, config: ModelConfig, params: Params, buffers: Optional[Buffers] = None):
        self.config = config
        self.params = params
        self.buffers = buffers if buffers is not None else init_buffers(config, self.dtype_of(params))

    @staticmethod
    def dtype_of(params: Params) -> str:
        dtypes = {str(t.dtype) for t in params.values()}
        return dtypes.pop() if len(dtypes) == 1 else "float32"

    @classmethod
    def initialize(cls, config: ModelConfig, seed: int, dtype: str = "float32") -> "ChangeFormer":
        return cls(config, init_weights(config, seed, dtype), init_buffers(config, dtype))

    @property
    def dtype(self) -> str:
        return self.dtype_of(self.params)

    def encode(self, image: Tensor, strict: bool = True) -> FeaturePyramid:
        return encode(image, self.config, self.params, strict=strict)

    def __call__(self, pre: Tensor, post: Tensor, training: bool = False, strict: bool = True) -> Tensor:
        return forward(pre, post, self, training=training, strict=strict)

    def predict(self, pre: Tensor, post: Tensor, strict: bool = True) -> np.ndarray:
        """Eval-mode argmax change mask, {0, 1} uint8"""
        with no_grad():
            logits = forward(pre, post, self, training=False, strict=strict)
        return np.argmax(logits.data, axis=-1).astype(np.uint8)

    def parameters(self) -> Iterator[Tuple[str, Tensor]]:
        return iter(self.params.items())

    def num_parameters(self, prefix: str = "") -> int:
        return count_parameters(self.params, prefix)

    def zero_grad(self) -> None:
        for tensor in self.params.values():
            tensor.zero_grad()

    def state_arrays(self) -> Dict[str, np.ndarray]:
        return {name: t.data for name, t in self.params.items()}


def forward(pre: Tensor, post: Tensor, model: ChangeFormer, training: bool = False,
            strict: bool = True) -> Tensor:
    """logits = decode(encode(pre), encode(post)) with one encoder weight set"""
    if pre.shape != post.shape:
        raise ShapeError(f"pre image {pre.shape} and post image {post.shape} differ in size")
    pyr_pre = model.encode(pre, strict=strict)
    pyr_post = model.encode(post, strict=strict)
    return decode(pyr_pre, pyr_post, model.params, model.buffers, model.config, training=training)
