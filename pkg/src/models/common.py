"""Shared building blocks for the trainable networks: parameter sets, initialisers, loops."""

from __future__ import annotations

import logging
from contextlib import contextmanager
from dataclasses import asdict
from pathlib import Path
from typing import Callable, Iterator, Mapping, Optional

import numpy as np
from tqdm.auto import tqdm

from src.autodiff.optim import OptimizerState, adamw_step
from src.autodiff.tensor import Tape, Tensor, zero_grad
from src.errors import ContainerFormatError, DivergenceError, ShapeError
from src.io.storage import load_network, save_network, to_plain

logger = logging.getLogger(__name__)


class ParameterSet:
    """Ordered, named float64 parameters of one network."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, array: np.ndarray) -> Tensor:
        if name in self._params:
            raise KeyError(f"duplicate parameter name {name!r}")
        tensor = Tensor(array, requires_grad=True, name=name)
        self._params[name] = tensor
        return tensor

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def named_parameters(self) -> Iterator[tuple[str, Tensor]]:
        return iter(self._params.items())

    def parameters(self) -> list[Tensor]:
        return list(self._params.values())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self._params.items()}

    def load_state_dict(self, state: Mapping[str, np.ndarray]) -> None:
        missing = set(self._params) - set(state)
        unexpected = set(state) - set(self._params)
        if missing or unexpected:
            raise KeyError(f"state mismatch: missing={sorted(missing)} unexpected={sorted(unexpected)}")
        for name, p in self._params.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != p.shape:
                raise ShapeError(f"parameter {name}: stored {value.shape} vs model {p.shape}")
            p.data = value.copy()

    def zero_grad(self) -> None:
        for p in self._params.values():
            p.zero_grad()

    @contextmanager
    def frozen(self):
        """Stop gradients into these parameters for the duration of the block."""
        saved = {name: p.requires_grad for name, p in self._params.items()}
        for p in self._params.values():
            p.requires_grad = False
        try:
            yield self
        finally:
            for name, p in self._params.items():
                p.requires_grad = saved[name]


class Network:
    """Base for the trainable networks: a config dataclass, a seed and a ParameterSet.

    Subclasses set `kind` and `config_cls` and create their parameters in
    `build(rng)`. Persistence goes through the shared parameter container
    with a YAML sidecar recording the architecture.
    """

    kind = "network"
    config_cls: type = object

    def __init__(self, config, seed: int = 0):
        self.config = config
        self.seed = int(seed)
        self.params = ParameterSet()
        self.build(np.random.default_rng(self.seed))

    def build(self, rng: np.random.Generator) -> None:
        raise NotImplementedError

    def parameters(self) -> list[Tensor]:
        return self.params.parameters()

    def state_dict(self) -> dict[str, np.ndarray]:
        return self.params.state_dict()

    def frozen(self):
        return self.params.frozen()

    def manifest(self) -> dict:
        return {
            "kind": self.kind,
            "config": to_plain(asdict(self.config)),
            "seed": self.seed,
            "n_parameters": int(sum(p.size for p in self.parameters())),
        }

    def save(self, stem: Path, **extra) -> tuple[Path, Path]:
        return save_network(stem, self.state_dict(), {**self.manifest(), **to_plain(extra)})

    @classmethod
    def load(cls, stem: Path):
        state, manifest = load_network(stem)
        if manifest.get("kind") != cls.kind:
            raise ContainerFormatError(f"{stem}: expected a {cls.kind} artifact, found {manifest.get('kind')!r}")
        model = cls(cls.config_cls(**manifest["config"]), seed=manifest.get("seed", 0))
        model.params.load_state_dict(state)
        logger.info(f"Loaded {cls.kind} from {stem} ({manifest.get('n_parameters', 0)} parameters)")
        return model


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int, gain: float = 1.0) -> np.ndarray:
    limit = gain * np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def sinusoidal_features(t, dim: int, max_period: float = 10_000.0) -> np.ndarray:
    """Transformer-style timestep features, shape (len(t), dim)."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    half = dim // 2
    freqs = np.exp(-np.log(max_period) * np.arange(half) / half)
    args = t[:, None] * freqs[None, :]
    feats = np.concatenate([np.sin(args), np.cos(args)], axis=1)
    if dim % 2:
        feats = np.concatenate([feats, np.zeros((len(t), 1))], axis=1)
    return feats


def minibatches(n: int, batch: int, rng: np.random.Generator) -> Iterator[np.ndarray]:
    """Shuffled index batches covering 0..n-1 once."""
    order = rng.permutation(n)
    for start in range(0, n, batch):
        yield order[start:start + batch]


def one_hot(labels: np.ndarray, n_classes: int) -> np.ndarray:
    out = np.zeros((len(labels), n_classes))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def check_finite(what: str, index: int, value: float) -> None:
    if not np.isfinite(value):
        raise DivergenceError(what, index, value)


def as_batch(x, width: int, what: str) -> np.ndarray:
    """2-D float64 copy of `x` with `width` columns."""
    arr = np.asarray(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != width:
        raise ShapeError(f"{what}: expected rows of width {width}, got shape {arr.shape}")
    return arr


def fit(
    params: list[Tensor],
    batch_loss: Callable[[np.ndarray, np.random.Generator], Tensor],
    n: int,
    epochs: int,
    batch: int,
    rng: np.random.Generator,
    state: OptimizerState,
    what: str,
    on_epoch_end: Optional[Callable[[int, float], None]] = None,
) -> list[float]:
    """Minibatch AdamW over `epochs` passes; returns the mean loss of each epoch.

    `batch_loss(idx, rng)` builds the loss for one index batch; it is
    evaluated under a fresh tape. A non-finite loss raises DivergenceError
    with the epoch index.
    """
    losses: list[float] = []
    for epoch in tqdm(range(epochs), desc=what, leave=False, disable=None):
        total, count = 0.0, 0
        for idx in minibatches(n, batch, rng):
            tape = Tape()
            with tape:
                loss = batch_loss(idx, rng)
            check_finite(what, epoch, loss.item())
            zero_grad(params)
            tape.backward(loss, wrt=params)
            adamw_step(params, state)
            total += loss.item() * len(idx)
            count += len(idx)
        losses.append(total / count)
        if on_epoch_end is not None:
            on_epoch_end(epoch, losses[-1])
    return losses
