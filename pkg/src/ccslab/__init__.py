"""Toy diffusion-sampling lab: DDIM inversion error, content-consistency
sampling and SVGD-style temporal smoothing, checked against an analytic
Gaussian-mixture denoiser."""

__version__ = "0.1.0"

from ._backend import BACKEND
from .ccs import CCSConfig, ccs_sample, consistency_noise, f_hat, f_hat_calibrated
from .ddim import ddim_invert_naive, ddim_sample, ddim_step, invert_exact_from_trajectory, roundtrip_error
from .denoiser import AnalyticMixtureDenoiser, Conditioning, MixtureParams, predict_noise
from .gridprompt import compose_grid, edit_prompt, make_mask
from .pipeline import PipelineConfig, edit_video, gen_toy_video
from .schedule import NoiseSchedule, SeededNoiseSource, SigmaPolicy, make_schedule, sigma_at, subsample_timesteps
from .tcs import ParticleSet, TCSConfig, phi_hat, rbf_kernel, tcs_update

__all__ = [
    "BACKEND",
    "AnalyticMixtureDenoiser",
    "CCSConfig",
    "Conditioning",
    "MixtureParams",
    "NoiseSchedule",
    "ParticleSet",
    "PipelineConfig",
    "SeededNoiseSource",
    "SigmaPolicy",
    "TCSConfig",
    "ccs_sample",
    "compose_grid",
    "consistency_noise",
    "ddim_invert_naive",
    "ddim_sample",
    "ddim_step",
    "edit_prompt",
    "edit_video",
    "f_hat",
    "f_hat_calibrated",
    "gen_toy_video",
    "invert_exact_from_trajectory",
    "make_mask",
    "make_schedule",
    "phi_hat",
    "predict_noise",
    "rbf_kernel",
    "roundtrip_error",
    "sigma_at",
    "subsample_timesteps",
    "tcs_update",
]
