"""Semantic embeddings {e_a}, edit settings and their persistence."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from src.autodiff.tensor import Tensor
from src.errors import ContainerFormatError, ShapeError
from src.io.storage import load_network, save_network

logger = logging.getLogger(__name__)

ClassId = Union[int, tuple]


@dataclass
class SemanticEmbedding:
    """Learned condition tokens for one class of one attribute."""

    class_id: ClassId
    tokens: np.ndarray  # (n_tokens, condition_dim)
    attribute: str = ""

    def __post_init__(self):
        self.tokens = np.array(self.tokens, dtype=np.float64)
        if self.tokens.ndim != 2 or self.tokens.shape[0] < 1:
            raise ShapeError(f"embedding tokens must be (n_tokens >= 1, dim), got {self.tokens.shape}")
        if not np.all(np.isfinite(self.tokens)):
            raise ValueError(f"embedding for class {self.class_id} has non-finite values")

    @property
    def n_tokens(self) -> int:
        return self.tokens.shape[0]

    @property
    def condition_dim(self) -> int:
        return self.tokens.shape[1]

    def as_condition(self) -> Tensor:
        return Tensor(self.tokens)


@dataclass
class EditConfig:
    """Edit and embedding-training settings.

    scale is the guidance scale (lambda); L_frac the noising depth as a
    fraction of T; gamma weighs the latent reconstruction loss; steps is the
    DDIM step count of a full trajectory, so an edit from L_frac * T takes
    round(steps * L_frac) steps.
    """

    scale: float = 10.0
    L_frac: float = 0.4
    gamma: float = 0.1
    window: tuple[float, float] = (1.0, 0.0)
    steps: int = 50
    seed: int = 0
    n_tokens: int = 4
    lr: float = 1e-2
    weight_decay: float = 0.0

    def __post_init__(self):
        self.window = tuple(self.window)
        if not 0.0 < self.L_frac <= 1.0:
            raise ValueError(f"L_frac must lie in (0, 1], got {self.L_frac}")
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if self.n_tokens < 1:
            raise ValueError(f"n_tokens must be >= 1, got {self.n_tokens}")
        if not np.isfinite(self.scale):
            raise ValueError(f"guidance scale must be finite, got {self.scale}")

    @property
    def edit_steps(self) -> int:
        return max(1, int(round(self.steps * self.L_frac)))


def init_embeddings(
    null_embedding: np.ndarray, n_classes: int, n_tokens: int = 4, seed: int = 0, attribute: str = ""
) -> list[SemanticEmbedding]:
    """Tokens start at the null embedding plus N(0, 0.02^2) noise."""
    rng = np.random.default_rng(seed)
    base = np.asarray(null_embedding, dtype=np.float64).reshape(1, -1)
    return [
        SemanticEmbedding(a, np.repeat(base, n_tokens, axis=0) + rng.normal(0.0, 0.02, size=(n_tokens, base.shape[1])), attribute)
        for a in range(n_classes)
    ]


def concat_embeddings(embeddings: Sequence[SemanticEmbedding]) -> SemanticEmbedding:
    """Stack token sequences; the class id becomes the tuple of the parts' ids."""
    if not embeddings:
        raise ValueError("concat_embeddings needs at least one embedding")
    if len(embeddings) == 1:
        only = embeddings[0]
        return SemanticEmbedding(only.class_id, only.tokens.copy(), only.attribute)
    dims = {e.condition_dim for e in embeddings}
    if len(dims) != 1:
        raise ShapeError(f"concat_embeddings: token widths differ {sorted(dims)}")
    class_id = tuple(e.class_id for e in embeddings)
    attribute = "+".join(e.attribute for e in embeddings)
    return SemanticEmbedding(class_id, np.vstack([e.tokens for e in embeddings]), attribute)


def save_embeddings(embeddings: Sequence[SemanticEmbedding], stem: Path, **extra) -> tuple[Path, Path]:
    state = {f"class{i}.tokens": e.tokens for i, e in enumerate(embeddings)}
    manifest = {
        "kind": "embeddings",
        "attribute": embeddings[0].attribute if embeddings else "",
        "class_ids": [e.class_id for e in embeddings],
        "n_tokens": [e.n_tokens for e in embeddings],
        "condition_dim": embeddings[0].condition_dim if embeddings else 0,
        **extra,
    }
    return save_network(stem, state, manifest)


def load_embeddings(stem: Path) -> list[SemanticEmbedding]:
    state, manifest = load_network(stem)
    if manifest.get("kind") != "embeddings":
        raise ContainerFormatError(f"{stem}: expected an embeddings artifact, found {manifest.get('kind')!r}")
    attribute = manifest.get("attribute", "")
    class_ids = manifest.get("class_ids", [])
    return [
        SemanticEmbedding(
            tuple(cid) if isinstance(cid, list) else cid, state[f"class{i}.tokens"], attribute
        )
        for i, cid in enumerate(class_ids)
    ]
