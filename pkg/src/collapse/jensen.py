"""
Jensen-gap bound of the single-step approximation.

    bound = d / sqrt(2 pi sigma2) * exp(-1 / (2 sigma2)) * G * Q

G is the largest gradient norm of the classifier's target logit through
the decoder, ||grad_z F(D(z))||, over a finite probe set (so it is a lower
bound of the supremum). Q is a Monte-Carlo estimate of E||z0 - z0_hat||,
z0_hat being the one-step clean prediction from z_L re-noised from z0.
"""

from __future__ import annotations

import logging
from contextlib import ExitStack
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
import pandas as pd

from src.autodiff import ops
from src.autodiff.tensor import Tape, Tensor
from src.diffusion.sampling import forward_noise, predict_x0
from src.diffusion.schedule import NoiseSchedule
from src.errors import DivergenceError
from src.models.classifier import ClassifierModel
from src.models.codec import Codec
from src.models.denoiser import DenoiserModel

logger = logging.getLogger(__name__)


@dataclass
class JensenGapEstimate:
    d: int
    sigma2: float
    L: int
    grad_norm_max: float
    Q_mc: float
    prefactor: float
    bound: float
    n_probe: int
    n_samples: int
    target_class: int
    grad_norm_is_lower_bound: bool = True

    def to_dict(self) -> dict:
        return asdict(self)


def jensen_prefactor(d: int, sigma2: float) -> float:
    if sigma2 <= 0:
        raise ValueError(f"sigma2 must be positive, got {sigma2}")
    return d / np.sqrt(2.0 * np.pi * sigma2) * np.exp(-1.0 / (2.0 * sigma2))


def decoder_gradient_norms(
    classifier: ClassifierModel, codec: Codec, latents: np.ndarray, target_class: int
) -> np.ndarray:
    """||grad_z F_target(D(z))|| for every row z of `latents`."""
    z = Tensor(latents, requires_grad=True)
    z.zero_grad()
    with ExitStack() as stack:
        stack.enter_context(classifier.frozen())
        stack.enter_context(codec.frozen())
        tape = Tape()
        with tape:
            logits = classifier.logits(codec.decode(z))
            loss = ops.sum(ops.getitem(logits, (slice(None), target_class)))
        tape.backward(loss)
    norms = np.linalg.norm(z.grad, axis=1)
    bad = np.flatnonzero(~np.isfinite(norms))
    if len(bad):
        raise DivergenceError("decoder gradient", int(bad[0]), float(norms[bad[0]]))
    return norms


def posterior_gap(
    denoiser: DenoiserModel,
    latents: np.ndarray,
    schedule: NoiseSchedule,
    L: int,
    n_samples: int,
    rng: np.random.Generator,
) -> float:
    """Mean ||z0 - z0_hat|| over re-noised draws of known clean latents."""
    rows = rng.integers(0, len(latents), size=n_samples)
    z0 = latents[rows]
    eps = rng.standard_normal(z0.shape)
    z_L = forward_noise(z0, L, eps, schedule)
    z0_hat = predict_x0(z_L, denoiser(z_L, L, None), L, schedule)
    return float(np.mean(np.linalg.norm(z0 - z0_hat.data, axis=1)))


def jensen_gap_bound(
    classifier: ClassifierModel,
    codec: Codec,
    denoiser: DenoiserModel,
    images: np.ndarray,
    schedule: NoiseSchedule,
    L: int,
    sigma2: float = 1.0,
    n_probe: int = 64,
    n_samples: int = 256,
    target_class: int = 0,
    seed: int = 0,
) -> JensenGapEstimate:
    """Assemble the bound from a probe-set gradient maximum and a Monte-Carlo gap.

    Probes are dataset encodings (first half) and their copies noised to L
    (second half).
    """
    if n_probe < 1:
        raise ValueError(f"n_probe must be >= 1, got {n_probe}")
    if n_samples < 1:
        raise ValueError(f"n_samples must be >= 1, got {n_samples}")
    L = schedule.check_timestep(L, "noise level")
    x = np.asarray(images, dtype=np.float64).reshape(len(images), -1)
    latents = codec.encode(x).data
    rng = np.random.default_rng(seed)

    n_clean = (n_probe + 1) // 2
    picks = rng.integers(0, len(latents), size=n_probe)
    probes = latents[picks].copy()
    if n_probe > n_clean:
        eps = rng.standard_normal(probes[n_clean:].shape)
        probes[n_clean:] = forward_noise(probes[n_clean:], L, eps, schedule).data
    grad_norm_max = float(decoder_gradient_norms(classifier, codec, probes, target_class).max())

    Q_mc = posterior_gap(denoiser, latents, schedule, L, n_samples, rng)
    d = latents.shape[1]
    prefactor = jensen_prefactor(d, sigma2)
    bound = prefactor * grad_norm_max * Q_mc
    logger.debug(f"jensen_gap_bound L={L} sigma2={sigma2}: G={grad_norm_max:.4g} Q={Q_mc:.4g} bound={bound:.4g}")
    return JensenGapEstimate(
        d=d,
        sigma2=float(sigma2),
        L=L,
        grad_norm_max=grad_norm_max,
        Q_mc=Q_mc,
        prefactor=float(prefactor),
        bound=float(bound),
        n_probe=n_probe,
        n_samples=n_samples,
        target_class=target_class,
    )


def jensen_sweep(
    classifier: ClassifierModel,
    codec: Codec,
    denoiser: DenoiserModel,
    images: np.ndarray,
    schedule: NoiseSchedule,
    levels: Sequence[int],
    sigma2_values: Sequence[float],
    **kwargs,
) -> pd.DataFrame:
    """One row per (L, sigma2) pair; the probe and Monte-Carlo draws depend only on L."""
    rows = []
    for L in levels:
        for sigma2 in sigma2_values:
            rows.append(jensen_gap_bound(classifier, codec, denoiser, images, schedule, int(L), sigma2, **kwargs).to_dict())
    return pd.DataFrame(rows)
