"""AdamW with decoupled weight decay"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional

import numpy as np

from src.core.errors import NumericalError
from src.core.models import TrainConfig
from src.numerics.tensor import Tensor


@dataclass
class AdamState:
    """First/second moments per parameter name and the shared step counter"""
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def adamw_step(params: Mapping[str, Tensor], grads: Mapping[str, Optional[np.ndarray]], state: AdamState,
               lr: float, cfg: TrainConfig) -> None:
    """
    One update, in place:
    θ ← θ − lr·(m̂/(√v̂ + ε) + wd·θ) with bias-corrected moments m̂, v̂

    Args:
        params: Named parameters to update
        grads: Gradient per name; None skips the parameter
        state: Moments (zero-initialized on first use)
        lr: Learning rate for this step
        cfg: Betas, epsilon and weight decay
    """
    for name, g in grads.items():
        if g is not None and not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient in parameter '{name}'")

    beta1, beta2 = cfg.betas
    state.step += 1
    t = state.step
    correction1 = 1.0 - beta1 ** t
    correction2 = 1.0 - beta2 ** t

    for name, param in params.items():
        g = grads.get(name)
        if g is None:
            continue
        m = state.m.setdefault(name, np.zeros_like(param.data))
        v = state.v.setdefault(name, np.zeros_like(param.data))
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)

        m_hat = m / correction1
        v_hat = v / correction2
        update = m_hat / (np.sqrt(v_hat) + cfg.adam_eps) + cfg.weight_decay * param.data
        param.data -= (lr * update).astype(param.dtype)


class AdamW:
    """Optimizer bound to a parameter dictionary"""

    def __init__(self, params: Mapping[str, Tensor], cfg: TrainConfig, state: Optional[AdamState] = None):
        self.params = params
        self.cfg = cfg
        self.state = state or AdamState()

    def step(self, lr: float) -> None:
        adamw_step(self.params, {n: p.grad for n, p in self.params.items()}, self.state, lr, self.cfg)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()
