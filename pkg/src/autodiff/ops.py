"""
Differentiable primitives.

The primitive set is deliberately small: add, sub, mul, matmul, affine,
relu, tanh, softmax, sum, mean, mse, concat, getitem (slicing), broadcast_to
and reshape. Everything else in the package is composed from these, so the
finite-difference suite in tests/smoke/test_autodiff.py covers all of it.

Each primitive computes its output with numpy, and when a tape is active and
an input requires grad, records a vector-Jacobian product closure.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from src.autodiff.tensor import Node, Tensor, active_tape, as_tensor
from src.errors import ShapeError


def _emit(op: str, inputs: tuple[Tensor, ...], out: np.ndarray, vjp) -> Tensor:
    requires = any(t.requires_grad for t in inputs)
    result = Tensor.wrap(out, requires_grad=requires)
    if requires:
        tape = active_tape()
        if tape is not None:
            tape.record(Node(op, inputs, result, vjp))
    return result


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum `grad` down to `shape` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    lead = grad.ndim - len(shape)
    if lead > 0:
        grad = grad.sum(axis=tuple(range(lead)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: cannot broadcast shapes {a.shape} and {b.shape}") from None


# ============================================================================
# Elementwise
# ============================================================================

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _emit("add", (a, b), a.data + b.data, vjp)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _emit("sub", (a, b), a.data - b.data, vjp)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)

    def vjp(g):
        return (
            _unbroadcast(g * b.data, a.shape) if a.requires_grad else None,
            _unbroadcast(g * a.data, b.shape) if b.requires_grad else None,
        )

    return _emit("mul", (a, b), a.data * b.data, vjp)


def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0

    def vjp(g):
        return (g * mask,)

    return _emit("relu", (x,), np.where(mask, x.data, 0.0), vjp)


def tanh(x) -> Tensor:
    x = as_tensor(x)
    out = np.tanh(x.data)

    def vjp(g):
        return (g * (1.0 - out * out),)

    return _emit("tanh", (x,), out, vjp)


def softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _emit("softmax", (x,), out, vjp)


# ============================================================================
# Linear algebra
# ============================================================================

def matmul(a, b, transpose_b: bool = False) -> Tensor:
    """a @ b (or a @ b.T). `a` may be a vector or a matrix, `b` a matrix."""
    a, b = as_tensor(a), as_tensor(b)
    if b.ndim != 2 or a.ndim not in (1, 2):
        raise ShapeError(f"matmul: unsupported ranks {a.shape} @ {b.shape}")
    bm = b.data.T if transpose_b else b.data
    if a.shape[-1] != bm.shape[0]:
        op = "matmul(transpose_b)" if transpose_b else "matmul"
        raise ShapeError(f"{op}: inner dimensions differ, {a.shape} @ {bm.shape}")

    def vjp(g):
        ga = g @ bm.T if a.requires_grad else None
        gb = None
        if b.requires_grad:
            a2 = a.data.reshape(-1, a.shape[-1])
            g2 = g.reshape(-1, bm.shape[1])
            gb = g2.T @ a2 if transpose_b else a2.T @ g2
        return ga, gb

    return _emit("matmul", (a, b), a.data @ bm, vjp)


def affine(x, w, b) -> Tensor:
    """x @ w + b for a batch (rows) or single vector x."""
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    if w.ndim != 2 or x.ndim not in (1, 2) or x.shape[-1] != w.shape[0]:
        raise ShapeError(f"affine: input {x.shape} does not fit weight {w.shape}")
    if b.shape != (w.shape[1],):
        raise ShapeError(f"affine: bias {b.shape} does not fit weight {w.shape}")

    def vjp(g):
        gx = g @ w.data.T if x.requires_grad else None
        gw = gb = None
        if w.requires_grad:
            gw = np.outer(x.data, g) if x.ndim == 1 else x.data.T @ g
        if b.requires_grad:
            gb = g if g.ndim == 1 else g.sum(axis=0)
        return gx, gw, gb

    return _emit("affine", (x, w, b), x.data @ w.data + b.data, vjp)


# ============================================================================
# Reductions and losses
# ============================================================================

def _expand_back(g: np.ndarray, shape, axis, keepdims: bool) -> np.ndarray:
    if axis is not None and not keepdims:
        g = np.expand_dims(g, axis)
    return np.broadcast_to(g, shape).copy()


def sum(x, axis: Optional[int | tuple[int, ...]] = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    x = as_tensor(x)

    def vjp(g):
        return (_expand_back(g, x.shape, axis, keepdims),)

    return _emit("sum", (x,), np.sum(x.data, axis=axis, keepdims=keepdims), vjp)


def mean(x, axis: Optional[int | tuple[int, ...]] = None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    out = np.mean(x.data, axis=axis, keepdims=keepdims)
    count = x.size // max(out.size, 1) if x.size else 1

    def vjp(g):
        return (_expand_back(g, x.shape, axis, keepdims) / count,)

    return _emit("mean", (x,), out, vjp)


def mse(pred, target) -> Tensor:
    """Mean over all elements of (pred - target)**2."""
    pred, target = as_tensor(pred), as_tensor(target)
    if pred.shape != target.shape:
        raise ShapeError(f"mse: prediction {pred.shape} vs target {target.shape}")
    diff = pred.data - target.data

    def vjp(g):
        gp = g * 2.0 * diff / diff.size
        return gp, -gp

    return _emit("mse", (pred, target), np.mean(diff * diff), vjp)


# ============================================================================
# Structure
# ============================================================================

def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    parts = tuple(as_tensor(t) for t in tensors)
    if not parts:
        raise ShapeError("concat: nothing to concatenate")
    try:
        out = np.concatenate([p.data for p in parts], axis=axis)
    except ValueError as exc:
        shapes = [p.shape for p in parts]
        raise ShapeError(f"concat: incompatible shapes {shapes} along axis {axis}") from exc
    bounds = np.cumsum([p.shape[axis] for p in parts])[:-1]

    def vjp(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _emit("concat", parts, out, vjp)


def getitem(x, index) -> Tensor:
    """Basic or integer-array indexing; gradients scatter-add back."""
    x = as_tensor(x)
    try:
        out = np.array(x.data[index], dtype=np.float64)
    except IndexError as exc:
        raise ShapeError(f"getitem: index {index!r} invalid for shape {x.shape}") from exc

    def vjp(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, index, g)
        return (gx,)

    return _emit("getitem", (x,), out, vjp)


def broadcast_to(x, shape: tuple[int, ...]) -> Tensor:
    x = as_tensor(x)
    try:
        out = np.broadcast_to(x.data, shape).copy()
    except ValueError:
        raise ShapeError(f"broadcast_to: cannot broadcast {x.shape} to {tuple(shape)}") from None

    def vjp(g):
        return (_unbroadcast(g, x.shape),)

    return _emit("broadcast_to", (x,), out, vjp)


def reshape(x, shape: tuple[int, ...]) -> Tensor:
    x = as_tensor(x)
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {x.shape} to {tuple(shape)}") from None

    def vjp(g):
        return (g.reshape(x.shape),)

    return _emit("reshape", (x,), out.copy(), vjp)
