"""Central finite-difference checks for tape gradients."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from src.autodiff.tensor import Tape, Tensor, zero_grad


def analytic_gradients(loss_fn: Callable[[], Tensor], params: Sequence[Tensor]) -> list[np.ndarray]:
    """Gradients of the scalar `loss_fn()` w.r.t. `params` from one backward pass."""
    zero_grad(params)
    tape = Tape()
    with tape:
        loss = loss_fn()
    tape.backward(loss, wrt=params)
    return [p.grad.copy() for p in params]


def numerical_gradients(
    loss_fn: Callable[[], Tensor], params: Sequence[Tensor], step: float = 1e-5
) -> list[np.ndarray]:
    """Central differences (f(p+h) - f(p-h)) / 2h, one coordinate at a time."""
    grads = []
    for p in params:
        g = np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = loss_fn().item()
            flat[i] = orig - step
            down = loss_fn().item()
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * step)
        grads.append(g)
    return grads


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """||a - b|| / max(||a|| + ||b||, tiny); 0 when both vanish."""
    scale = np.linalg.norm(a) + np.linalg.norm(b)
    if scale < 1e-300:
        return 0.0
    return float(np.linalg.norm(a - b) / scale)


def check_gradients(
    loss_fn: Callable[[], Tensor], params: Sequence[Tensor], step: float = 1e-5
) -> float:
    """Worst relative error between analytic and numerical gradients."""
    analytic = analytic_gradients(loss_fn, params)
    numeric = numerical_gradients(loss_fn, params, step=step)
    return max(relative_error(a, n) for a, n in zip(analytic, numeric))
