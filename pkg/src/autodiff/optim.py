"""
AdamW with decoupled weight decay.

Update for each parameter p with gradient g at step k (1-based):

    p <- p * (1 - lr * weight_decay)
    m <- beta1 * m + (1 - beta1) * g
    v <- beta2 * v + (1 - beta2) * g**2
    p <- p - lr * (m / (1 - beta1**k)) / (sqrt(v / (1 - beta2**k)) + eps)
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from src.autodiff.tensor import Tensor
from src.errors import ShapeError


@dataclass
class OptimizerState:
    """Moment accumulators and hyperparameters for one parameter list."""

    lr: float = 1e-2
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    exp_avg: list[np.ndarray] = field(default_factory=list)
    exp_avg_sq: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: Sequence[Tensor], **hyper) -> "OptimizerState":
        state = cls(**hyper)
        state.exp_avg = [np.zeros_like(p.data) for p in params]
        state.exp_avg_sq = [np.zeros_like(p.data) for p in params]
        return state


def adamw_step(params: Sequence[Tensor], state: OptimizerState) -> None:
    """Update `params` in place; gradients are left untouched."""
    if len(state.exp_avg) != len(params):
        raise ShapeError(
            f"adamw_step: state tracks {len(state.exp_avg)} parameters, got {len(params)}"
        )
    for i, p in enumerate(params):
        if p.grad is None:
            label = p.name or f"#{i}"
            raise ValueError(f"adamw_step: parameter {label} has no gradient; run backward first")
        if state.exp_avg[i].shape != p.shape:
            raise ShapeError(
                f"adamw_step: moment shape {state.exp_avg[i].shape} vs parameter {p.shape}"
            )

    state.step += 1
    bias1 = 1.0 - state.beta1 ** state.step
    bias2 = 1.0 - state.beta2 ** state.step
    for p, m, v in zip(params, state.exp_avg, state.exp_avg_sq):
        g = p.grad
        if state.weight_decay:
            p.data *= 1.0 - state.lr * state.weight_decay
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p.data -= state.lr * (m / bias1) / (np.sqrt(v / bias2) + state.eps)
