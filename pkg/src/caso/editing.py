"""
Editing with learned embeddings.

The multi-step pipeline is: encode -> DDIM-invert to L -> guided DDIM
sampling back to 0 -> decode. `generate_single_step` is the one-shot
generator used during embedding training: noise the latent to L, predict
z_0 from the guided noise in one step, decode.
"""

from __future__ import annotations

import logging
from dataclasses import replace
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from src.autodiff import ops
from src.autodiff.tensor import Tensor, as_tensor
from src.caso.embedding import EditConfig, SemanticEmbedding
from src.diffusion.sampling import (
    GuidanceSpec,
    LatentState,
    cfg_combine,
    forward_noise,
    invert_loop,
    predict_x0,
    sample_loop,
)
from src.diffusion.schedule import NoiseSchedule
from src.models.classifier import ClassifierModel
from src.models.codec import Codec
from src.models.denoiser import DenoiserModel

logger = logging.getLogger(__name__)


def _flatten(x) -> tuple[Tensor, tuple[int, ...]]:
    x = as_tensor(x)
    shape = x.shape
    if x.ndim == 1:
        return ops.reshape(x, (1, shape[0])), shape
    if x.ndim > 2:
        return ops.reshape(x, (shape[0], int(np.prod(shape[1:])))), shape
    return x, shape


def _condition(embedding: Optional[SemanticEmbedding]) -> Optional[Tensor]:
    return None if embedding is None else embedding.as_condition()


# ============================================================================
# Single-step generator
# ============================================================================

def generate_single_step(
    x,
    condition: Optional[Tensor],
    cfg: EditConfig,
    denoiser: DenoiserModel,
    codec: Codec,
    schedule: NoiseSchedule,
    eps: Optional[np.ndarray] = None,
) -> tuple[Tensor, Tensor, Tensor]:
    """D(predict_x0(z_L, cfg_combine(eps(z_L, phi), eps(z_L, e), scale), L)).

    `condition` is a token tensor (it may require grad). `eps` defaults to
    a draw from `cfg.seed`.

    Returns:
        (x_hat, z0_hat, z0): decoded edit, its latent and the clean latent.
    """
    flat, _ = _flatten(x)
    z0 = codec.encode(flat)
    L = schedule.level(cfg.L_frac)
    if eps is None:
        eps = np.random.default_rng(cfg.seed).standard_normal(z0.shape)
    z_L = forward_noise(z0, L, eps, schedule)
    eps_uncond = denoiser(z_L, L, None)
    if condition is None or cfg.scale == 0.0:
        eps_tilde = eps_uncond
    else:
        eps_tilde = cfg_combine(eps_uncond, denoiser(z_L, L, condition), cfg.scale)
    z0_hat = predict_x0(z_L, eps_tilde, L, schedule)
    return codec.decode(z0_hat), z0_hat, z0


# ============================================================================
# Multi-step editing
# ============================================================================

def invert(x, cfg: EditConfig, denoiser: DenoiserModel, codec: Codec, schedule: NoiseSchedule) -> LatentState:
    """Encode and DDIM-invert `x` to the noise level of `cfg`."""
    flat, _ = _flatten(x)
    L = schedule.level(cfg.L_frac)
    z0 = codec.encode(flat)
    return LatentState(invert_loop(LatentState(z0, 0), denoiser, L, cfg.edit_steps, schedule), L)


def _sample(
    z_L: LatentState,
    condition: Optional[Tensor],
    cfg: EditConfig,
    denoiser: DenoiserModel,
    codec: Codec,
    schedule: NoiseSchedule,
    shape: tuple[int, ...],
    max_guided_steps: Optional[int] = None,
) -> np.ndarray:
    guidance = GuidanceSpec(cfg.scale, cfg.window, condition, max_guided_steps)
    z = sample_loop(z_L, denoiser, guidance, cfg.edit_steps, schedule)
    return codec.decode(z).data.reshape(shape)


def edit(
    x,
    embedding: Optional[SemanticEmbedding],
    cfg: EditConfig,
    denoiser: DenoiserModel,
    codec: Codec,
    schedule: NoiseSchedule,
) -> np.ndarray:
    """Invert to L = L_frac * T, then sample back with guidance toward `embedding`.

    Output has the shape of `x`. With scale 0 (or no embedding) the result is
    the unconditional reconstruction.
    """
    _, shape = _flatten(x)
    z_L = invert(x, cfg, denoiser, codec, schedule)
    return _sample(z_L, _condition(embedding), cfg, denoiser, codec, schedule, shape)


def edit_single_step(
    x,
    embedding: Optional[SemanticEmbedding],
    cfg: EditConfig,
    denoiser: DenoiserModel,
    codec: Codec,
    schedule: NoiseSchedule,
) -> np.ndarray:
    """As `edit`, but guidance is applied at the first in-window step only."""
    _, shape = _flatten(x)
    z_L = invert(x, cfg, denoiser, codec, schedule)
    return _sample(z_L, _condition(embedding), cfg, denoiser, codec, schedule, shape, max_guided_steps=1)


def interpolate_scale(
    x,
    embedding: Optional[SemanticEmbedding],
    lambdas: Sequence[float],
    cfg: EditConfig,
    denoiser: DenoiserModel,
    codec: Codec,
    schedule: NoiseSchedule,
) -> list[np.ndarray]:
    """One edit per guidance scale, all sampled from a single shared inversion."""
    lambdas = [float(lam) for lam in lambdas]
    if not all(np.isfinite(lambdas)):
        raise ValueError(f"guidance scales must be finite, got {lambdas}")
    _, shape = _flatten(x)
    z_L = invert(x, cfg, denoiser, codec, schedule)
    condition = _condition(embedding)
    return [
        _sample(z_L, condition, replace(cfg, scale=lam), denoiser, codec, schedule, shape)
        for lam in lambdas
    ]


def edit_towards(
    x,
    embeddings: Sequence[SemanticEmbedding],
    targets: np.ndarray,
    cfg: EditConfig,
    denoiser: DenoiserModel,
    codec: Codec,
    schedule: NoiseSchedule,
    single_step: bool = False,
) -> np.ndarray:
    """Edit each row of `x` with the embedding of its own target class.

    Passing the source labels as targets gives guided reconstruction.
    """
    x = np.asarray(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
    targets = np.asarray(targets, dtype=int)
    if len(targets) != len(x):
        raise ValueError(f"edit_towards: {len(x)} images vs {len(targets)} targets")
    run = edit_single_step if single_step else edit
    out = np.empty_like(x)
    for a in np.unique(targets):
        rows = np.flatnonzero(targets == a)
        out[rows] = run(x[rows], embeddings[a], cfg, denoiser, codec, schedule)
    return out


# ============================================================================
# Scoring
# ============================================================================

def edit_success_rate(classifier: ClassifierModel, edited: np.ndarray, targets) -> float:
    """Fraction of edited images the classifier assigns to their target class."""
    return classifier.accuracy(np.asarray(edited).reshape(len(edited), -1), targets)


def edit_verdicts(
    classifier: ClassifierModel,
    source: np.ndarray,
    edited: np.ndarray,
    source_labels,
    targets,
    scale: float,
) -> pd.DataFrame:
    """Per-image verdict table: 'reconstruction' when scale == 0, else 'success'/'fail'."""
    n = len(source)
    before = classifier.predict(np.asarray(source).reshape(n, -1))
    logits = classifier.logits(np.asarray(edited).reshape(n, -1)).data
    after = np.argmax(logits, axis=1)
    targets = np.asarray(targets, dtype=int)
    if scale == 0.0:
        verdict = np.full(n, "reconstruction", dtype=object)
    else:
        verdict = np.where(after == targets, "success", "fail").astype(object)
    return pd.DataFrame(
        {
            "index": np.arange(n),
            "source_label": np.asarray(source_labels, dtype=int),
            "target_label": targets,
            "predicted_before": before,
            "predicted_after": after,
            "target_logit": logits[np.arange(n), targets],
            "scale": float(scale),
            "verdict": verdict,
        }
    )


def outside_region_mse(source: np.ndarray, edited: np.ndarray, region: np.ndarray) -> np.ndarray:
    """Per-image mean squared change over pixels outside `region` (bool, image-shaped)."""
    source = np.asarray(source, dtype=np.float64).reshape(len(source), -1)
    edited = np.asarray(edited, dtype=np.float64).reshape(len(edited), -1)
    keep = ~np.asarray(region, dtype=bool).reshape(len(source), -1)
    diff = np.where(keep, (edited - source) ** 2, 0.0)
    return diff.sum(axis=1) / np.maximum(keep.sum(axis=1), 1)


def reconstruction_mse(source: np.ndarray, edited: np.ndarray) -> np.ndarray:
    source = np.asarray(source, dtype=np.float64).reshape(len(source), -1)
    edited = np.asarray(edited, dtype=np.float64).reshape(len(edited), -1)
    return np.mean((edited - source) ** 2, axis=1)
