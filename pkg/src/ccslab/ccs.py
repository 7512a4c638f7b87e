"""Content consistency sampling.

The DDIM step with ``sigma_t = sqrt(1 - a_{t-1})`` loses its
direction-pointing term, so each step is "re-noise the current clean estimate,
then map back to a clean estimate". Replacing the model's noise in that map by
the noise that sends the current latent exactly onto the source frame makes
every step return the source; a scaled denoising difference between the edit
and source conditionings is then added to steer away from it.
"""

from __future__ import annotations

import math
from collections.abc import Iterator
from dataclasses import dataclass, field

import numpy as np

from .ddim import ddim_step
from .denoiser import UNCONDITIONED, Conditioning, DenoiserModel, predict_noise
from .gridprompt import Embedder, GridState, IdentityEmbedder, PromptVector
from .schedule import NoiseSchedule, SeededNoiseSource, SigmaPolicy, sigma_at, subsample_timesteps

__all__ = [
    "CCSConfig",
    "CCSState",
    "Companion",
    "consistency_noise",
    "f_hat",
    "f_hat_calibrated",
    "denoising_difference",
    "prompt_conditioning",
    "iter_ccs",
    "ccs_sample",
]

COMPANION_MODES = ("shared", "lockstep")
DELTA_EPS_AT = ("produced", "current")


@dataclass(frozen=True)
class CCSConfig:
    """CCS settings.

    ``companion`` picks the latents the denoising difference is evaluated on:
    ``shared`` uses the current CCS latent under both conditionings,
    ``lockstep`` runs separate edit/source denoising trajectories from one
    shared noise draw. ``delta_eps_at`` chooses whether the difference is taken
    at the timestep being produced or the one being left.
    """

    schedule: NoiseSchedule
    lambda2: float = 1.2
    n_steps: int = 30
    seed: int = 0
    companion: str = "shared"
    companion_policy: SigmaPolicy = field(default_factory=SigmaPolicy.zero)
    delta_eps_at: str = "produced"

    def __post_init__(self):
        if self.n_steps < 1 or self.n_steps > self.schedule.T:
            raise ValueError(f"n_steps must lie in [1, {self.schedule.T}], got {self.n_steps}")
        if self.lambda2 < 0:
            raise ValueError(f"lambda2 must be non-negative, got {self.lambda2}")
        if self.companion not in COMPANION_MODES:
            raise ValueError(f"companion must be one of {COMPANION_MODES}, got {self.companion!r}")
        if self.delta_eps_at not in DELTA_EPS_AT:
            raise ValueError(f"delta_eps_at must be one of {DELTA_EPS_AT}, got {self.delta_eps_at!r}")

    @property
    def timesteps(self) -> list[int]:
        return subsample_timesteps(self.schedule.T, self.n_steps)


@dataclass(frozen=True)
class Companion:
    z_t_edit: np.ndarray
    z_t_src: np.ndarray


@dataclass(frozen=True)
class CCSState:
    t: int
    z_hat_t: np.ndarray
    z0_out: np.ndarray
    eps_c: np.ndarray
    delta_eps: np.ndarray
    companion: Companion


def consistency_noise(z_hat_t, t: int, z0_src, schedule: NoiseSchedule) -> np.ndarray:
    """The noise under which ``z_hat_t`` is exactly a noisy copy of ``z0_src``."""
    a_t = schedule.a(t)
    if t < 1 or a_t >= 1.0:
        raise ValueError(f"consistency noise undefined at t={t} (alpha={a_t})")
    return (np.asarray(z_hat_t) - math.sqrt(a_t) * np.asarray(z0_src)) / math.sqrt(1.0 - a_t)


def f_hat(z_hat_t, t: int, eps_c, schedule: NoiseSchedule) -> np.ndarray:
    a_t = schedule.a(t)
    return (np.asarray(z_hat_t) - math.sqrt(1.0 - a_t) * np.asarray(eps_c)) / math.sqrt(a_t)


def f_hat_calibrated(z_hat_t, t: int, z0_src, delta_eps, lambda2: float, schedule: NoiseSchedule) -> np.ndarray:
    a_t = schedule.a(t)
    eps = consistency_noise(z_hat_t, t, z0_src, schedule) + lambda2 * np.asarray(delta_eps)
    return (np.asarray(z_hat_t) - math.sqrt(1.0 - a_t) * eps) / math.sqrt(a_t)


def denoising_difference(
    model: DenoiserModel,
    state: CCSState | Companion,
    t: int,
    cond_edit: Conditioning,
    cond_src: Conditioning = UNCONDITIONED,
) -> np.ndarray:
    comp = state.companion if isinstance(state, CCSState) else state
    return predict_noise(model, comp.z_t_edit, t, cond_edit) - predict_noise(model, comp.z_t_src, t, cond_src)


def prompt_conditioning(prompt: PromptVector, embedder: Embedder) -> Conditioning:
    return Conditioning(prompt=prompt, edit_shift=embedder.decode(prompt.p))


def iter_ccs(
    model: DenoiserModel,
    z0_src,
    grid: GridState,
    prompt: PromptVector,
    config: CCSConfig,
    embedder: Embedder | None = None,
    stream: int = 0,
) -> Iterator[CCSState]:
    """Yield the CCS state at each subsampled timestep, largest first.

    The first state is anchored: its clean estimate is the source latent and
    its latent is the shared initial noise draw.
    """
    z0_src = np.asarray(z0_src, dtype=np.float64)
    if not np.array_equal(z0_src, grid.quad_ll):
        raise ValueError("z0_src must be the grid's lower-left (query) quadrant")
    embedder = embedder or IdentityEmbedder()
    schedule = config.schedule
    cond_edit = prompt_conditioning(prompt, embedder)
    cond_src = UNCONDITIONED
    noise = SeededNoiseSource(config.seed, stream)
    steps = config.timesteps
    dim = z0_src.size

    z_hat = noise.draw(dim)
    comp = Companion(z_hat, z_hat)
    z0_out = z0_src
    state = CCSState(steps[0], z_hat, z0_out, consistency_noise(z_hat, steps[0], z0_src, schedule), np.zeros(dim), comp)
    yield state

    for t, t_prev in zip(steps, steps[1:]):
        if config.companion == "shared":
            comp_left = Companion(z_hat, z_hat)
        else:
            comp_left = comp
            sigma = sigma_at(schedule, config.companion_policy, t, t_prev)
            comp_noise = noise.draw(dim) if sigma != 0.0 else None
            comp = Companion(
                *(
                    ddim_step(z, t, predict_noise(model, z, t, c), schedule, sigma, comp_noise, t_prev=t_prev)
                    for z, c in ((comp.z_t_edit, cond_edit), (comp.z_t_src, cond_src))
                )
            )

        a_prev = schedule.a(t_prev)
        z_hat = math.sqrt(a_prev) * z0_out + math.sqrt(1.0 - a_prev) * noise.draw(dim)
        if config.companion == "shared":
            comp = Companion(z_hat, z_hat)

        if config.delta_eps_at == "produced":
            delta = denoising_difference(model, comp, t_prev, cond_edit, cond_src)
        else:
            delta = denoising_difference(model, comp_left, t, cond_edit, cond_src)
        z0_out = f_hat_calibrated(z_hat, t_prev, z0_src, delta, config.lambda2, schedule)
        state = CCSState(t_prev, z_hat, z0_out, consistency_noise(z_hat, t_prev, z0_src, schedule), delta, comp)
        yield state


def ccs_sample(
    model: DenoiserModel,
    z0_src,
    grid: GridState,
    prompt: PromptVector,
    config: CCSConfig,
    embedder: Embedder | None = None,
    stream: int = 0,
) -> tuple[np.ndarray, list[np.ndarray]]:
    """Run CCS to the smallest subsampled timestep.

    Returns:
        The final clean estimate and the clean estimate at every timestep.
    """
    outputs = [s.z0_out for s in iter_ccs(model, z0_src, grid, prompt, config, embedder, stream)]
    return outputs[-1], outputs
