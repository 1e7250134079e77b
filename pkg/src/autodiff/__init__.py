"""Float64 tensors, a reverse-mode tape, and AdamW."""

from src.autodiff import ops
from src.autodiff.optim import OptimizerState, adamw_step
from src.autodiff.tensor import Node, Tape, Tensor, active_tape, as_tensor, zero_grad

__all__ = [
    "ops",
    "Node",
    "Tape",
    "Tensor",
    "active_tape",
    "as_tensor",
    "zero_grad",
    "OptimizerState",
    "adamw_step",
]
