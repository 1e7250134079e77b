"""Linear-beta noise schedule and timestep bookkeeping."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class NoiseSchedule:
    """Cumulative signal coefficients alpha_bar[0..T], alpha_bar[0] == 1."""

    T: int
    beta_min: float
    beta_max: float
    alpha_bar: np.ndarray = field(repr=False, compare=False)

    def check_timestep(self, t: int, what: str = "timestep") -> int:
        t = int(t)
        if not 0 <= t <= self.T:
            raise ValueError(f"{what} {t} outside schedule range 0..{self.T}")
        return t

    def signal(self, t: int) -> float:
        """sqrt(alpha_bar_t)."""
        return float(np.sqrt(self.alpha_bar[self.check_timestep(t)]))

    def noise(self, t: int) -> float:
        """sqrt(1 - alpha_bar_t)."""
        return float(np.sqrt(1.0 - self.alpha_bar[self.check_timestep(t)]))

    def level(self, fraction: float) -> int:
        """Timestep index nearest to fraction * T, at least 1 for fraction > 0."""
        if not 0.0 <= fraction <= 1.0:
            raise ValueError(f"noise fraction {fraction} outside [0, 1]")
        t = int(round(fraction * self.T))
        return max(t, 1) if fraction > 0 else 0

    def as_dict(self) -> dict:
        return {"T": self.T, "beta_min": self.beta_min, "beta_max": self.beta_max}


def make_schedule(T: int, beta_min: float, beta_max: float) -> NoiseSchedule:
    """Betas interpolated linearly over t = 1..T; alpha_bar_t = prod_{s<=t} (1 - beta_s)."""
    if T < 1:
        raise ValueError(f"schedule needs T >= 1, got {T}")
    if not 0.0 < beta_min <= beta_max < 1.0:
        raise ValueError(
            f"schedule needs 0 < beta_min <= beta_max < 1, got [{beta_min}, {beta_max}]"
        )
    betas = np.linspace(beta_min, beta_max, T) if T > 1 else np.array([beta_min])
    alpha_bar = np.concatenate([[1.0], np.cumprod(1.0 - betas)])
    alpha_bar.setflags(write=False)
    return NoiseSchedule(T=T, beta_min=beta_min, beta_max=beta_max, alpha_bar=alpha_bar)


def timestep_sequence(L: int, steps: int) -> np.ndarray:
    """Ascending timesteps 0 = t_0 < ... < t_n = L with uniform stride.

    Rounding can merge neighbours when steps > L; duplicates are dropped.
    """
    if steps < 1:
        raise ValueError(f"need at least one step, got {steps}")
    if L <= 0:
        return np.array([0], dtype=int)
    seq = np.round(np.linspace(0, L, steps + 1)).astype(int)
    return np.unique(seq)
