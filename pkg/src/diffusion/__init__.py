"""Noise schedule, DDIM maps and classifier-free guidance."""

from src.diffusion.sampling import (
    GuidanceSpec,
    LatentState,
    cfg_combine,
    ddim_denoise_step,
    ddim_invert_step,
    forward_noise,
    guided_noise,
    invert_loop,
    predict_x0,
    sample_loop,
)
from src.diffusion.schedule import NoiseSchedule, make_schedule, timestep_sequence

__all__ = [
    "GuidanceSpec",
    "LatentState",
    "NoiseSchedule",
    "cfg_combine",
    "ddim_denoise_step",
    "ddim_invert_step",
    "forward_noise",
    "guided_noise",
    "invert_loop",
    "make_schedule",
    "predict_x0",
    "sample_loop",
    "timestep_sequence",
]
