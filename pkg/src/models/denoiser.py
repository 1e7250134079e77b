"""
Conditional noise predictor eps_theta(z_t, t, c) with a learned null condition.

Architecture: a residual tanh MLP over the latent. The timestep enters as
sinusoidal features through a learned affine map; the condition (a token
sequence of width `condition_dim`) is mean-pooled to one vector, projected,
and added to the timestep embedding in front of every residual block.

Token order never matters: a shared token sequence is sorted row-wise
before pooling, so concatenations in any order pool to bit-identical vectors.

Training follows the classifier-free recipe: each sample carries its class
label embedding, replaced by the null embedding with probability
`drop_prob`.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd

from src.autodiff import ops
from src.autodiff.optim import OptimizerState
from src.autodiff.tensor import Tensor, as_tensor
from src.diffusion.sampling import forward_noise
from src.diffusion.schedule import NoiseSchedule
from src.errors import ShapeError
from src.models.common import Network, as_batch, fit, glorot, sinusoidal_features

logger = logging.getLogger(__name__)


@dataclass
class DenoiserConfig:
    data_dim: int
    n_classes: int
    hidden: int = 128
    n_blocks: int = 3
    time_dim: int = 32
    condition_dim: int = 32
    T: int = 1000


class DenoiserModel(Network):
    """eps_theta with a null embedding (phi) and one label embedding per class."""

    kind = "denoiser"
    config_cls = DenoiserConfig

    def build(self, rng: np.random.Generator) -> None:
        c = self.config
        p = self.params
        p.add("time.weight", glorot(rng, c.time_dim, c.hidden))
        p.add("time.bias", np.zeros(c.hidden))
        p.add("cond.weight", glorot(rng, c.condition_dim, c.hidden))
        p.add("cond.bias", np.zeros(c.hidden))
        p.add("input.weight", glorot(rng, c.data_dim, c.hidden))
        p.add("input.bias", np.zeros(c.hidden))
        for k in range(c.n_blocks):
            p.add(f"block{k}.fc1.weight", glorot(rng, c.hidden, c.hidden))
            p.add(f"block{k}.fc1.bias", np.zeros(c.hidden))
            p.add(f"block{k}.fc2.weight", glorot(rng, c.hidden, c.hidden, gain=0.5))
            p.add(f"block{k}.fc2.bias", np.zeros(c.hidden))
        p.add("output.weight", glorot(rng, c.hidden, c.data_dim, gain=0.1))
        p.add("output.bias", np.zeros(c.data_dim))
        # zero rows: a label only matters once training has moved it
        p.add("label_embedding", np.zeros((c.n_classes, c.condition_dim)))
        p.add("null_embedding", rng.normal(0.0, 0.5, size=(1, c.condition_dim)))

    @property
    def null_embedding(self) -> Tensor:
        return self.params["null_embedding"]

    @property
    def condition_dim(self) -> int:
        return self.config.condition_dim

    # -- conditioning --------------------------------------------------------

    def class_condition(self, label: int) -> Tensor:
        """The trained label embedding of class `label` as a one-token condition."""
        if not 0 <= label < self.config.n_classes:
            raise ValueError(f"label {label} outside 0..{self.config.n_classes - 1}")
        return Tensor(self.params["label_embedding"].data[label:label + 1])

    def training_condition(self, rows: np.ndarray) -> Tensor:
        """Per-sample one-token conditions; row index n_classes selects the null embedding."""
        table = ops.concat([self.params["label_embedding"], self.params["null_embedding"]], axis=0)
        picked = ops.getitem(table, np.asarray(rows, dtype=int))
        return ops.reshape(picked, (len(rows), 1, self.condition_dim))

    def pool_condition(self, condition: Optional[Tensor]) -> Tensor:
        """Mean-pool a condition to shape (1, C) (shared) or (B, C) (per sample)."""
        if condition is None:
            return self.null_embedding
        condition = as_tensor(condition)
        if condition.ndim == 1:
            condition = ops.reshape(condition, (1, condition.shape[0]))
        if condition.ndim not in (2, 3) or condition.shape[-1] != self.condition_dim:
            raise ShapeError(
                f"denoiser condition: expected tokens of width {self.condition_dim}, got shape {condition.shape}"
            )
        if condition.ndim == 3:
            return ops.mean(condition, axis=1)
        order = np.lexsort(condition.data.T[::-1])
        return ops.mean(ops.getitem(condition, order), axis=0, keepdims=True)

    # -- evaluation ----------------------------------------------------------

    def __call__(self, z_t, t, condition: Optional[Tensor] = None) -> Tensor:
        z_t = as_tensor(z_t)
        if z_t.ndim != 2 or z_t.shape[1] != self.config.data_dim:
            raise ShapeError(f"denoiser input: expected (B, {self.config.data_dim}), got {z_t.shape}")
        t_arr = np.atleast_1d(np.asarray(t))
        if t_arr.min() < 0 or t_arr.max() > self.config.T:
            raise ValueError(f"timestep outside 0..{self.config.T}: {t}")
        if t_arr.size not in (1, z_t.shape[0]):
            raise ShapeError(f"denoiser timesteps: {t_arr.size} for a batch of {z_t.shape[0]}")

        p = self.params
        temb = ops.affine(sinusoidal_features(t_arr, self.config.time_dim), p["time.weight"], p["time.bias"])
        cemb = ops.affine(self.pool_condition(condition), p["cond.weight"], p["cond.bias"])
        emb = ops.add(temb, cemb)

        h = ops.affine(z_t, p["input.weight"], p["input.bias"])
        for k in range(self.config.n_blocks):
            u = ops.tanh(ops.add(h, emb))
            u = ops.tanh(ops.affine(u, p[f"block{k}.fc1.weight"], p[f"block{k}.fc1.bias"]))
            h = ops.add(h, ops.affine(u, p[f"block{k}.fc2.weight"], p[f"block{k}.fc2.bias"]))
        return ops.affine(ops.tanh(h), p["output.weight"], p["output.bias"])


@dataclass
class DenoiserTrainResult:
    model: DenoiserModel
    history: pd.DataFrame = field(repr=False)


def train_denoiser(
    latents: np.ndarray,
    labels: np.ndarray,
    schedule: NoiseSchedule,
    config: Optional[DenoiserConfig] = None,
    drop_prob: float = 0.1,
    epochs: int = 200,
    batch: int = 64,
    seed: int = 0,
    lr: float = 2e-3,
    weight_decay: float = 0.0,
) -> DenoiserTrainResult:
    """Minimize E||eps - eps_theta(z_t, t, c)||^2 with t uniform in 1..T.

    Args:
        latents: (n, d) clean latents (codec encodings of the training images).
        labels: (n,) class ids used as conditions.
        schedule: noise schedule; its T must match `config.T`.
        config: architecture; derived from the data when omitted.
        drop_prob: probability of replacing a sample's condition by the null embedding.

    Returns:
        DenoiserTrainResult with the model and a per-epoch loss history.
    """
    labels = np.asarray(labels, dtype=int)
    if len(latents) == 0:
        raise ValueError("train_denoiser needs at least one sample")
    if not 0.0 <= drop_prob <= 1.0:
        raise ValueError(f"drop_prob must lie in [0, 1], got {drop_prob}")
    if config is None:
        config = DenoiserConfig(data_dim=np.asarray(latents).shape[1], n_classes=int(labels.max()) + 1, T=schedule.T)
    if config.T != schedule.T:
        raise ValueError(f"denoiser T={config.T} does not match schedule T={schedule.T}")
    z0 = as_batch(latents, config.data_dim, "train_denoiser latents")
    if len(labels) != len(z0):
        raise ShapeError(f"train_denoiser: {len(z0)} latents vs {len(labels)} labels")
    if labels.min() < 0 or labels.max() >= config.n_classes:
        raise ValueError(f"labels outside 0..{config.n_classes - 1}")

    model = DenoiserModel(config, seed=seed)
    params = model.parameters()
    state = OptimizerState.for_params(params, lr=lr, weight_decay=weight_decay)
    rng = np.random.default_rng(seed + 1)

    def batch_loss(idx: np.ndarray, rng: np.random.Generator) -> Tensor:
        t = rng.integers(1, schedule.T + 1, size=len(idx))
        eps = rng.standard_normal((len(idx), config.data_dim))
        dropped = rng.random(len(idx)) < drop_prob
        rows = np.where(dropped, config.n_classes, labels[idx])
        z_t = forward_noise(Tensor(z0[idx]), t, eps, schedule)
        pred = model(z_t, t, model.training_condition(rows))
        return ops.mse(pred, Tensor(eps))

    losses = fit(params, batch_loss, len(z0), epochs, batch, rng, state, "denoiser")
    history = pd.DataFrame({"epoch": np.arange(len(losses), dtype=int), "loss": losses})
    if losses:
        logger.info(f"Denoiser trained: {epochs} epochs, loss {losses[0]:.4f} -> {losses[-1]:.4f}")
    return DenoiserTrainResult(model=model, history=history)
