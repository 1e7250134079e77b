"""
Forward noising, DDIM inversion/denoising and classifier-free guidance.

All maps are written with the autodiff primitives so that gradients flow
from a clean-sample prediction back into the conditioning tokens. Outside an
active tape they are plain numpy evaluations.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Protocol

import numpy as np

from src.autodiff import ops
from src.autodiff.tensor import Tensor, as_tensor
from src.diffusion.schedule import NoiseSchedule, timestep_sequence
from src.errors import ShapeError

logger = logging.getLogger(__name__)


class Denoiser(Protocol):
    def __call__(self, z_t: Tensor, t, condition: Optional[Tensor] = None) -> Tensor: ...


@dataclass
class LatentState:
    """A latent batch z (rows) at timestep t."""

    z: Tensor
    t: int


@dataclass
class GuidanceSpec:
    """Classifier-free guidance settings for a sampling run.

    window = (t_start, t_stop) as fractions of T; the conditional branch is
    used at timestep t iff t_stop * T <= t <= t_start * T. When
    `max_guided_steps` is set, only that many in-window steps (the earliest
    ones, i.e. the noisiest) are guided.
    """

    scale: float
    window: tuple[float, float] = (1.0, 0.0)
    condition: Optional[Tensor] = None
    max_guided_steps: Optional[int] = None

    def __post_init__(self):
        t_start, t_stop = self.window
        if not 0.0 <= t_stop <= t_start <= 1.0:
            raise ValueError(f"guidance window needs 0 <= t_stop <= t_start <= 1, got {self.window}")
        if self.max_guided_steps is not None and self.max_guided_steps < 0:
            raise ValueError(f"max_guided_steps must be >= 0, got {self.max_guided_steps}")

    def in_window(self, t: int, T: int) -> bool:
        t_start, t_stop = self.window
        return t_stop * T <= t <= t_start * T


def _same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes differ, {a.shape} vs {b.shape}")


# ============================================================================
# Closed-form maps
# ============================================================================

def _noise_coefficients(L, s: NoiseSchedule):
    if np.ndim(L) == 0:
        L = s.check_timestep(L, "noise level")
        return s.signal(L), s.noise(L)
    L = np.asarray(L, dtype=int)
    if L.min() < 0 or L.max() > s.T:
        raise ValueError(f"noise levels outside schedule range 0..{s.T}: [{L.min()}, {L.max()}]")
    ab = s.alpha_bar[L][:, None]
    return np.sqrt(ab), np.sqrt(1.0 - ab)


def forward_noise(z0, L, eps, s: NoiseSchedule) -> Tensor:
    """sqrt(ab_L) * z0 + sqrt(1 - ab_L) * eps.

    L is one timestep, or one per row of z0.
    """
    z0, eps = as_tensor(z0), as_tensor(eps)
    _same_shape("forward_noise", z0, eps)
    signal, noise = _noise_coefficients(L, s)
    return ops.add(ops.mul(z0, signal), ops.mul(eps, noise))


def cfg_combine(eps_uncond, eps_cond, scale: float) -> Tensor:
    """eps_uncond + scale * (eps_cond - eps_uncond), written as (1-scale)*u + scale*c."""
    eps_uncond, eps_cond = as_tensor(eps_uncond), as_tensor(eps_cond)
    _same_shape("cfg_combine", eps_uncond, eps_cond)
    return ops.add(ops.mul(eps_uncond, 1.0 - scale), ops.mul(eps_cond, scale))


def predict_x0(z_L, eps_tilde, L: int, s: NoiseSchedule) -> Tensor:
    """(z_L - sqrt(1 - ab_L) * eps) / sqrt(ab_L)."""
    z_L, eps_tilde = as_tensor(z_L), as_tensor(eps_tilde)
    _same_shape("predict_x0", z_L, eps_tilde)
    L = s.check_timestep(L, "noise level")
    return ops.mul(ops.sub(z_L, ops.mul(eps_tilde, s.noise(L))), 1.0 / s.signal(L))


def ddim_denoise_step(z_t, eps, t: int, t_prev: int, s: NoiseSchedule) -> Tensor:
    """One deterministic DDIM step t -> t_prev with predicted noise `eps`."""
    z_t, eps = as_tensor(z_t), as_tensor(eps)
    _same_shape("ddim_denoise_step", z_t, eps)
    t, t_prev = s.check_timestep(t), s.check_timestep(t_prev, "previous timestep")
    if t_prev > t:
        raise ValueError(f"ddim_denoise_step needs t_prev <= t, got {t_prev} > {t}")
    if t_prev == t:
        return z_t
    x0 = predict_x0(z_t, eps, t, s)
    return ops.add(ops.mul(x0, s.signal(t_prev)), ops.mul(eps, s.noise(t_prev)))


def ddim_invert_step(z_t, eps, t: int, t_next: int, s: NoiseSchedule) -> Tensor:
    """One inversion step t -> t_next holding the predicted noise fixed."""
    z_t, eps = as_tensor(z_t), as_tensor(eps)
    _same_shape("ddim_invert_step", z_t, eps)
    t, t_next = s.check_timestep(t), s.check_timestep(t_next, "next timestep")
    if t_next <= t:
        raise ValueError(f"ddim_invert_step needs t_next > t, got {t_next} <= {t}")
    ab_t, ab_n = float(s.alpha_bar[t]), float(s.alpha_bar[t_next])
    if ab_n == ab_t:
        return z_t
    ratio = np.sqrt(ab_n / ab_t)
    coef = (np.sqrt(1.0 / ab_n - 1.0) - np.sqrt(1.0 / ab_t - 1.0)) * np.sqrt(ab_n)
    return ops.add(ops.mul(z_t, ratio), ops.mul(eps, coef))


# ============================================================================
# Loops
# ============================================================================

def guided_noise(model: Denoiser, z: Tensor, t: int, guidance: Optional[GuidanceSpec]) -> Tensor:
    """Unconditional prediction, or its CFG combination when guidance applies.

    With scale 0 or no condition the conditional branch is not evaluated.
    """
    eps_uncond = model(z, t, None)
    if guidance is None or guidance.scale == 0.0 or guidance.condition is None:
        return eps_uncond
    eps_cond = model(z, t, guidance.condition)
    return cfg_combine(eps_uncond, eps_cond, guidance.scale)


def sample_loop(
    z_L: LatentState, model: Denoiser, g: GuidanceSpec, steps: int, s: NoiseSchedule
) -> Tensor:
    """Denoise from z_L.t down to 0 along `timestep_sequence(z_L.t, steps)`."""
    seq = timestep_sequence(s.check_timestep(z_L.t, "start timestep"), steps)[::-1]
    z = z_L.z
    guided = 0
    for t, t_prev in zip(seq[:-1], seq[1:]):
        use = g.in_window(int(t), s.T)
        if use and g.max_guided_steps is not None:
            use = guided < g.max_guided_steps
        guided += int(use)
        eps = guided_noise(model, z, int(t), g if use else None)
        z = ddim_denoise_step(z, eps, int(t), int(t_prev), s)
    logger.debug(f"sample_loop: {len(seq) - 1} steps from t={z_L.t}, {guided} guided")
    return z


def invert_loop(z0: LatentState, model: Denoiser, L: int, steps: int, s: NoiseSchedule) -> Tensor:
    """Map a clean latent to z_L with unconditional predictions."""
    seq = timestep_sequence(s.check_timestep(L, "noise level"), steps)
    z = z0.z
    for t, t_next in zip(seq[:-1], seq[1:]):
        eps = model(z, int(t), None)
        z = ddim_invert_step(z, eps, int(t), int(t_next), s)
    return z
