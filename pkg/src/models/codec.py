"""Latent codec (E, D): identity, or a small learned autoencoder."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd

from src.autodiff import ops
from src.autodiff.optim import OptimizerState
from src.autodiff.tensor import Tensor, as_tensor
from src.errors import ShapeError
from src.models.common import Network, as_batch, fit, glorot

logger = logging.getLogger(__name__)

VARIANTS = ("identity", "learned")


@dataclass
class CodecConfig:
    input_dim: int
    latent_dim: int = 32
    hidden: int = 96
    variant: str = "identity"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"codec variant must be one of {VARIANTS}, got {self.variant!r}")


class Codec(Network):
    """encode: (B, input_dim) -> (B, latent_dim); decode is the reverse map.

    The identity variant has no parameters and returns its argument
    unchanged, so decode(encode(x)) is x itself.
    """

    kind = "codec"
    config_cls = CodecConfig

    def build(self, rng: np.random.Generator) -> None:
        c = self.config
        if c.variant == "identity":
            return
        self.params.add("enc.fc1.weight", glorot(rng, c.input_dim, c.hidden))
        self.params.add("enc.fc1.bias", np.zeros(c.hidden))
        self.params.add("enc.fc2.weight", glorot(rng, c.hidden, c.latent_dim))
        self.params.add("enc.fc2.bias", np.zeros(c.latent_dim))
        self.params.add("dec.fc1.weight", glorot(rng, c.latent_dim, c.hidden))
        self.params.add("dec.fc1.bias", np.zeros(c.hidden))
        self.params.add("dec.fc2.weight", glorot(rng, c.hidden, c.input_dim))
        self.params.add("dec.fc2.bias", np.full(c.input_dim, 0.5))

    @property
    def variant(self) -> str:
        return self.config.variant

    @property
    def latent_dim(self) -> int:
        return self.config.input_dim if self.variant == "identity" else self.config.latent_dim

    @staticmethod
    def _check(x: Tensor, width: int, what: str) -> Tensor:
        if x.ndim != 2 or x.shape[1] != width:
            raise ShapeError(f"{what}: expected (B, {width}), got {x.shape}")
        return x

    def encode(self, x) -> Tensor:
        x = self._check(as_tensor(x), self.config.input_dim, "codec encode")
        if self.variant == "identity":
            return x
        p = self.params
        h = ops.tanh(ops.affine(x, p["enc.fc1.weight"], p["enc.fc1.bias"]))
        return ops.affine(h, p["enc.fc2.weight"], p["enc.fc2.bias"])

    def decode(self, z) -> Tensor:
        z = self._check(as_tensor(z), self.latent_dim, "codec decode")
        if self.variant == "identity":
            return z
        p = self.params
        h = ops.tanh(ops.affine(z, p["dec.fc1.weight"], p["dec.fc1.bias"]))
        return ops.affine(h, p["dec.fc2.weight"], p["dec.fc2.bias"])


@dataclass
class CodecTrainResult:
    codec: Codec
    history: pd.DataFrame = field(repr=False)


def train_codec(
    data: np.ndarray,
    config: Optional[CodecConfig] = None,
    epochs: int = 300,
    batch: int = 64,
    seed: int = 0,
    lr: float = 3e-3,
) -> CodecTrainResult:
    """Fit the learned variant by MSE reconstruction; the identity variant is returned as is."""
    data = np.asarray(data, dtype=np.float64)
    if len(data) == 0:
        raise ValueError("train_codec needs at least one sample")
    x = data.reshape(len(data), -1)
    if config is None:
        config = CodecConfig(input_dim=x.shape[1], variant="learned")
    x = as_batch(x, config.input_dim, "train_codec data")
    codec = Codec(config, seed=seed)
    if config.variant == "identity":
        return CodecTrainResult(codec=codec, history=pd.DataFrame({"epoch": [], "loss": []}))

    params = codec.parameters()
    state = OptimizerState.for_params(params, lr=lr)
    rng = np.random.default_rng(seed + 1)

    def batch_loss(idx: np.ndarray, rng: np.random.Generator) -> Tensor:
        batch_x = Tensor(x[idx])
        return ops.mse(codec.decode(codec.encode(batch_x)), batch_x)

    losses = fit(params, batch_loss, len(x), epochs, batch, rng, state, "codec")
    history = pd.DataFrame({"epoch": np.arange(len(losses), dtype=int), "loss": losses})
    if losses:
        logger.info(f"Codec trained: {epochs} epochs, reconstruction MSE {losses[-1]:.5f}")
    return CodecTrainResult(codec=codec, history=history)
