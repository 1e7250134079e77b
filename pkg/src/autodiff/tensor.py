"""
Dense float64 tensors and the reverse-mode tape that differentiates them.

A `Tape` records every primitive evaluated while it is active (see
`src.autodiff.ops`). Recording order is a topological order of the
computation, so `Tape.backward` simply walks the records in reverse.

Usage:
    tape = Tape()
    with tape:
        loss = ops.mse(model(x), y)
    tape.backward(loss)
"""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from src.errors import ShapeError

logger = logging.getLogger(__name__)

_local = threading.local()


def active_tape() -> Optional["Tape"]:
    """Innermost tape that is recording on this thread, if any."""
    stack = getattr(_local, "stack", None)
    return stack[-1] if stack else None


class Tensor:
    """n-dimensional float64 array with an optional gradient buffer."""

    __slots__ = ("data", "grad", "requires_grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        self.data = np.array(data, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.name = name

    @classmethod
    def wrap(cls, array: np.ndarray, requires_grad: bool = False) -> "Tensor":
        """Adopt `array` without copying (primitives use this for outputs)."""
        out = cls.__new__(cls)
        out.data = np.asarray(array, dtype=np.float64)
        out.grad = None
        out.requires_grad = requires_grad
        out.name = None
        return out

    # -- shape ---------------------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def values(self) -> np.ndarray:
        """Flat view of the data, length == prod(shape)."""
        return self.data.reshape(-1)

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{label})"

    # -- operators (delegate to primitives) ----------------------------------

    def __add__(self, other):
        from src.autodiff import ops
        return ops.add(self, other)

    def __radd__(self, other):
        from src.autodiff import ops
        return ops.add(other, self)

    def __sub__(self, other):
        from src.autodiff import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from src.autodiff import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from src.autodiff import ops
        return ops.mul(self, other)

    def __rmul__(self, other):
        from src.autodiff import ops
        return ops.mul(other, self)

    def __neg__(self):
        from src.autodiff import ops
        return ops.mul(self, -1.0)

    def __matmul__(self, other):
        from src.autodiff import ops
        return ops.matmul(self, other)

    def __getitem__(self, index):
        from src.autodiff import ops
        return ops.getitem(self, index)


def as_tensor(value) -> Tensor:
    """Pass tensors through; wrap anything else as a constant."""
    if isinstance(value, Tensor):
        return value
    return Tensor.wrap(np.asarray(value, dtype=np.float64))


def zero_grad(params: Iterable[Tensor]) -> None:
    for p in params:
        p.zero_grad()


@dataclass
class Node:
    """One recorded primitive: output = op(*inputs)."""

    op: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    vjp: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Tape:
    """Ordered record of primitives for reverse-mode differentiation."""

    def __init__(self):
        self.nodes: list[Node] = []

    def __enter__(self) -> "Tape":
        stack = getattr(_local, "stack", None)
        if stack is None:
            stack = _local.stack = []
        stack.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _local.stack.pop()

    def __len__(self) -> int:
        return len(self.nodes)

    def record(self, node: Node) -> None:
        self.nodes.append(node)

    def clear(self) -> None:
        self.nodes.clear()

    def forward(self, fn: Callable[..., Tensor], inputs: Sequence[Tensor]) -> Tensor:
        """Evaluate `fn(*inputs)` with this tape recording."""
        with self:
            return fn(*inputs)

    def backward(self, loss: Tensor, wrt: Optional[Iterable[Tensor]] = None) -> None:
        """Accumulate d(loss)/d(leaf) into `.grad` of every leaf that requires grad.

        Leaves that require grad but do not reach the loss end with a zero
        gradient. The tape only sees leaves some primitive consumed; tensors
        listed in `wrt` also get a zero gradient when they never reached the
        tape. Gradients add to whatever is already in `.grad`.
        """
        if loss.size != 1:
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        if not self.nodes:
            raise RuntimeError("backward called before forward: the tape is empty")

        produced = {id(node.output) for node in self.nodes}
        if id(loss) not in produced:
            raise RuntimeError("backward called on a tensor this tape did not produce")

        for node in self.nodes:
            for inp in node.inputs:
                if inp.requires_grad and id(inp) not in produced and inp.grad is None:
                    inp.grad = np.zeros_like(inp.data)
        for p in wrt or ():
            if p.requires_grad and p.grad is None:
                p.grad = np.zeros_like(p.data)

        pending: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        for node in reversed(self.nodes):
            g_out = pending.pop(id(node.output), None)
            if g_out is None:
                continue
            for inp, g_in in zip(node.inputs, node.vjp(g_out)):
                if g_in is None or not inp.requires_grad:
                    continue
                if id(inp) in produced:
                    prev = pending.get(id(inp))
                    pending[id(inp)] = g_in if prev is None else prev + g_in
                else:
                    inp.grad += g_in
