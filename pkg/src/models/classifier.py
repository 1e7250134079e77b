"""
Attribute classifier F = head o F_{-1}.

F_{-1} is a two-hidden-layer tanh network ending in a `feature_dim`-wide
penultimate feature h. The head is linear: logits = W h + b with W of shape
(K, feature_dim), so row a of W is the class weight w_a used by the
collapse diagnostics. Training regresses logits onto one-hot targets with
the mean squared error.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import pandas as pd

from src.autodiff import ops
from src.autodiff.optim import OptimizerState
from src.autodiff.tensor import Tensor, as_tensor
from src.errors import ShapeError
from src.models.common import Network, as_batch, fit, glorot, one_hot

logger = logging.getLogger(__name__)


@dataclass
class ClassifierConfig:
    input_dim: int
    n_classes: int
    hidden: int = 64
    feature_dim: int = 16


class ClassifierModel(Network):
    kind = "classifier"
    config_cls = ClassifierConfig

    def build(self, rng: np.random.Generator) -> None:
        c = self.config
        self.params.add("fc1.weight", glorot(rng, c.input_dim, c.hidden))
        self.params.add("fc1.bias", rng.normal(0.0, 0.1, size=c.hidden))
        self.params.add("fc2.weight", glorot(rng, c.hidden, c.feature_dim))
        self.params.add("fc2.bias", rng.normal(0.0, 0.1, size=c.feature_dim))
        self.params.add("head.weight", glorot(rng, c.feature_dim, c.n_classes).T.copy())
        self.params.add("head.bias", np.zeros(c.n_classes))

    @property
    def n_classes(self) -> int:
        return self.config.n_classes

    @property
    def weight(self) -> np.ndarray:
        """W, shape (K, feature_dim)."""
        return self.params["head.weight"].data

    @property
    def bias(self) -> np.ndarray:
        return self.params["head.bias"].data

    def _flat(self, x) -> Tensor:
        x = as_tensor(x)
        if x.ndim > 2:
            x = ops.reshape(x, (x.shape[0], int(np.prod(x.shape[1:]))))
        if x.ndim != 2 or x.shape[1] != self.config.input_dim:
            raise ShapeError(f"classifier input: expected width {self.config.input_dim}, got shape {x.shape}")
        return x

    def features(self, x) -> Tensor:
        """Penultimate features F_{-1}(x), shape (B, feature_dim)."""
        p = self.params
        h = ops.tanh(ops.affine(self._flat(x), p["fc1.weight"], p["fc1.bias"]))
        return ops.tanh(ops.affine(h, p["fc2.weight"], p["fc2.bias"]))

    def head(self, h) -> Tensor:
        return ops.add(ops.matmul(h, self.params["head.weight"], transpose_b=True), self.params["head.bias"])

    def logits(self, x) -> Tensor:
        return self.head(self.features(x))

    def predict(self, x) -> np.ndarray:
        return np.argmax(self.logits(x).data, axis=1)

    def accuracy(self, x, labels) -> float:
        return float(np.mean(self.predict(x) == np.asarray(labels)))


@dataclass
class ClassifierTrainResult:
    model: ClassifierModel
    history: pd.DataFrame = field(repr=False)


def train_classifier(
    data: np.ndarray,
    labels: np.ndarray,
    epochs: int = 300,
    batch: int = 64,
    seed: int = 0,
    *,
    n_classes: Optional[int] = None,
    hidden: int = 64,
    feature_dim: int = 16,
    lr: float = 5e-3,
    weight_decay: float = 5e-4,
    on_epoch_end: Optional[Callable[[int, ClassifierModel], None]] = None,
) -> ClassifierTrainResult:
    """Train extractor and linear head by MSE against one-hot targets.

    Args:
        data: (n, ...) inputs; trailing axes are flattened.
        labels: (n,) class ids in 0..K-1.
        on_epoch_end: called as on_epoch_end(epoch, model) after every epoch,
            e.g. to record collapse diagnostics at checkpoints.

    Returns:
        ClassifierTrainResult; history has columns epoch, loss, accuracy.
    """
    data = np.asarray(data, dtype=np.float64)
    labels = np.asarray(labels, dtype=int)
    if len(data) == 0:
        raise ValueError("train_classifier needs at least one sample")
    x = as_batch(data.reshape(len(data), -1), int(np.prod(data.shape[1:])), "train_classifier data")
    if len(labels) != len(x):
        raise ShapeError(f"train_classifier: {len(x)} inputs vs {len(labels)} labels")
    present = np.unique(labels)
    if len(present) < 2:
        raise ValueError(f"train_classifier needs at least two classes, got {present.tolist()}")
    K = n_classes if n_classes is not None else int(labels.max()) + 1
    if labels.min() < 0 or labels.max() >= K:
        raise ValueError(f"labels outside 0..{K - 1}")

    model = ClassifierModel(ClassifierConfig(x.shape[1], K, hidden, feature_dim), seed=seed)
    params = model.parameters()
    state = OptimizerState.for_params(params, lr=lr, weight_decay=weight_decay)
    targets = one_hot(labels, K)
    rng = np.random.default_rng(seed + 1)
    accuracy: list[float] = []

    def batch_loss(idx: np.ndarray, rng: np.random.Generator) -> Tensor:
        return ops.mse(model.logits(Tensor(x[idx])), Tensor(targets[idx]))

    def after_epoch(epoch: int, loss: float) -> None:
        accuracy.append(model.accuracy(x, labels))
        if on_epoch_end is not None:
            on_epoch_end(epoch, model)

    losses = fit(params, batch_loss, len(x), epochs, batch, rng, state, "classifier", after_epoch)
    history = pd.DataFrame(
        {"epoch": np.arange(len(losses), dtype=int), "loss": losses, "accuracy": accuracy}
    )
    if losses:
        logger.info(f"Classifier trained: {epochs} epochs, loss {losses[-1]:.4f}, train accuracy {accuracy[-1]:.3f}")
    return ClassifierTrainResult(model=model, history=history)
