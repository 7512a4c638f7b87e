"""End-to-end toy edit propagation and latent-space evaluation metrics.

The toy world is a two-component isotropic mixture (the "data distribution"),
a source video that drifts along a fixed direction with per-frame jitter, and
a ground-truth edit that shifts every frame by ``delta``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .ccs import CCSConfig, ccs_sample, prompt_conditioning
from .ddim import ddim_sample
from .denoiser import AnalyticMixtureDenoiser, MixtureParams
from .gridprompt import Embedder, IdentityEmbedder, RandomProjectionEmbedder, compose_grid, edit_prompt
from .schedule import NoiseSchedule, SeededNoiseSource, SigmaPolicy, make_schedule
from .tcs import ParticleSet, TCSConfig, iter_tcs, median_bandwidth, mmd2

__all__ = [
    "FrameSequence",
    "ToyEdit",
    "VideoConfig",
    "WorldConfig",
    "PipelineConfig",
    "ToyWorld",
    "EditResult",
    "VARIANTS",
    "build_world",
    "gen_toy_video",
    "apply_toy_edit",
    "edit_video",
    "metric_content",
    "metric_roughness",
    "metric_mmd",
]

VARIANTS = ("full", "no-tcs", "no-ccs")

# stream ids below this are per-frame CCS/DDIM streams
WORLD_STREAM = 1_000_000


@dataclass(frozen=True)
class FrameSequence:
    frames: np.ndarray

    def __post_init__(self):
        f = np.ascontiguousarray(self.frames, dtype=np.float64)
        if f.ndim != 2 or f.shape[0] < 1:
            raise ValueError(f"frames must be a non-empty (N, dim) array, got shape {f.shape}")
        object.__setattr__(self, "frames", f)

    @property
    def N(self) -> int:
        return self.frames.shape[0]

    @property
    def dim(self) -> int:
        return self.frames.shape[1]

    def __getitem__(self, i):
        return self.frames[i]

    def __len__(self):
        return self.N


@dataclass(frozen=True)
class ToyEdit:
    delta: np.ndarray
    description: str = ""


@dataclass(frozen=True)
class VideoConfig:
    n_frames: int = 16
    dim: int = 64
    drift: float = 16.0
    jitter: float = 0.25

    def __post_init__(self):
        if self.n_frames < 1 or self.dim < 1:
            raise ValueError("video needs n_frames >= 1 and dim >= 1")
        if self.drift < 0 or self.jitter < 0:
            raise ValueError("drift and jitter must be non-negative")


@dataclass(frozen=True)
class WorldConfig:
    """Mixture layout and edit size. Means sit at ``+-separation`` along a random
    unit direction; ``edit_norm`` is the Euclidean length of ``delta``."""

    n_components: int = 2
    separation: float = 4.0
    component_std: float = 0.1
    edit_norm: float = 16.0

    def __post_init__(self):
        if self.n_components < 1 or self.component_std < 0 or self.edit_norm < 0:
            raise ValueError("invalid world configuration")


@dataclass(frozen=True)
class PipelineConfig:
    T: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 2e-2
    lambda1: float = 0.7
    lambda2: float = 1.2
    ccs_steps: int = 30
    companion: str = "shared"
    delta_eps_at: str = "produced"
    tcs: TCSConfig = field(default_factory=TCSConfig)
    video: VideoConfig = field(default_factory=VideoConfig)
    world: WorldConfig = field(default_factory=WorldConfig)
    embedder: str = "identity"
    seed: int = 0
    threads: int = 1

    def schedule(self) -> NoiseSchedule:
        return make_schedule(self.T, self.beta_start, self.beta_end)

    def ccs_config(self, schedule: NoiseSchedule | None = None) -> CCSConfig:
        return CCSConfig(
            schedule=schedule or self.schedule(),
            lambda2=self.lambda2,
            n_steps=self.ccs_steps,
            seed=self.seed,
            companion=self.companion,
            delta_eps_at=self.delta_eps_at,
        )

    def make_embedder(self) -> Embedder:
        if self.embedder == "identity":
            return IdentityEmbedder()
        if self.embedder == "projection":
            return RandomProjectionEmbedder(self.video.dim, seed=self.seed)
        raise ValueError(f"unknown embedder {self.embedder!r}")


def _unit(source: SeededNoiseSource, dim: int) -> np.ndarray:
    v = source.draw(dim)
    return v / np.linalg.norm(v)


@dataclass(frozen=True)
class ToyWorld:
    schedule: NoiseSchedule
    mixture: MixtureParams
    model: AnalyticMixtureDenoiser
    base: np.ndarray
    direction: np.ndarray
    edit: ToyEdit


def build_world(config: PipelineConfig) -> ToyWorld:
    """Deterministically derive mixture, video geometry and edit from the master seed."""
    dim = config.video.dim
    w = config.world
    src = SeededNoiseSource(config.seed, WORLD_STREAM)
    axis = _unit(src, dim)
    k = w.n_components
    # components evenly spaced on [-separation, +separation] along one axis
    offsets = np.linspace(w.separation, -w.separation, k) if k > 1 else np.zeros(1)
    mixture = MixtureParams(np.full(k, 1.0 / k), np.outer(offsets, axis), np.full(k, w.component_std))
    schedule = config.schedule()
    direction = _unit(src, dim)
    delta = w.edit_norm * _unit(src, dim)
    return ToyWorld(
        schedule=schedule,
        mixture=mixture,
        model=AnalyticMixtureDenoiser(mixture, schedule),
        base=mixture.means[0].copy(),
        direction=direction,
        edit=ToyEdit(delta, f"uniform shift, |delta| = {w.edit_norm:g}"),
    )


def gen_toy_video(config: PipelineConfig, source: SeededNoiseSource | None = None, world: ToyWorld | None = None) -> FrameSequence:
    """``frame(i) = base + drift * (i-1)/max(1, N-1) * direction + jitter * eps_i``."""
    world = world or build_world(config)
    v = config.video
    source = source or SeededNoiseSource(config.seed, WORLD_STREAM + 1)
    n = v.n_frames
    frames = np.empty((n, v.dim))
    for i in range(n):
        frac = i / max(1, n - 1)
        frames[i] = world.base + v.drift * frac * world.direction
        if v.jitter:
            frames[i] += v.jitter * source.draw(v.dim)
    return FrameSequence(frames)


def apply_toy_edit(frame, edit: ToyEdit) -> np.ndarray:
    frame = np.asarray(frame, dtype=np.float64)
    if frame.shape != edit.delta.shape:
        raise ValueError(f"frame shape {frame.shape} does not match edit {edit.delta.shape}")
    return frame + edit.delta


def metric_content(edited: FrameSequence, src: FrameSequence, edit: ToyEdit) -> float:
    """Mean per-frame distance to the ground-truth edited frames, per sqrt(dim)."""
    err = edited.frames - (src.frames + edit.delta)
    return float(np.mean(np.linalg.norm(err, axis=1)) / math.sqrt(src.dim))


def metric_roughness(seq: FrameSequence) -> float:
    """Mean adjacent-frame step length per sqrt(dim); 0 for a single frame."""
    if seq.N < 2:
        return 0.0
    return float(np.mean(np.linalg.norm(np.diff(seq.frames, axis=0), axis=1)) / math.sqrt(seq.dim))


def metric_mmd(a, b, h: float) -> float:
    return mmd2(np.asarray(a), np.asarray(b), h)


@dataclass
class EditResult:
    ccs_out: FrameSequence
    final: FrameSequence
    report: dict
    mmd_trace: list[float] = field(default_factory=list)
    bandwidths: list[float] = field(default_factory=list)


def _propagate_frame(i, src, first_edit, world, config, ccs_cfg, embedder, prompt, variant):
    if variant == "no-ccs":
        cond = prompt_conditioning(prompt, embedder)
        noise = SeededNoiseSource(config.seed, i)
        z_T = noise.draw(src.dim)
        out, _ = ddim_sample(world.model, z_T, world.schedule, ccs_cfg.timesteps, SigmaPolicy.zero(), cond)
        return out
    grid = compose_grid(src[0], first_edit, src[i])
    out, _ = ccs_sample(world.model, src[i], grid, prompt, ccs_cfg, embedder, stream=i)
    return out


def edit_video(
    src: FrameSequence,
    first_edit,
    config: PipelineConfig,
    world: ToyWorld | None = None,
    variant: str = "full",
) -> EditResult:
    """Propagate the first-frame edit to every later frame.

    Frame 1 is passed through untouched. Frames ``2..N`` each run CCS on their
    own noise stream (``stream = i``), or plain conditioned DDIM from fresh noise
    for the ``no-ccs`` variant, and then, unless the variant is ``no-tcs``, the
    particle update pulls frames ``2..N`` towards the matching source frames.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    first_edit = np.asarray(first_edit, dtype=np.float64)
    if first_edit.shape != (src.dim,):
        raise ValueError(f"first_edit shape {first_edit.shape} does not match frame dim {src.dim}")
    world = world or build_world(config)
    embedder = config.make_embedder()
    ccs_cfg = config.ccs_config(world.schedule)
    prompt = edit_prompt(embedder, first_edit, src[0], config.lambda1)

    rest = range(1, src.N)
    if config.threads > 1 and src.N > 2:
        with ThreadPoolExecutor(config.threads) as pool:
            outs = list(
                pool.map(
                    lambda i: _propagate_frame(i, src, first_edit, world, config, ccs_cfg, embedder, prompt, variant),
                    rest,
                )
            )
    else:
        outs = [_propagate_frame(i, src, first_edit, world, config, ccs_cfg, embedder, prompt, variant) for i in rest]
    ccs_frames = np.vstack([first_edit[None, :]] + [o[None, :] for o in outs])
    ccs_out = FrameSequence(ccs_frames)

    trace, bandwidths = [], []
    final_frames = ccs_frames.copy()
    if variant != "no-tcs" and src.N > 1:
        particles = ParticleSet(ccs_frames[1:], src.frames[1:])
        diag_h = median_bandwidth(np.vstack([particles.edited, particles.source]))
        if src.N > 2:
            trace.append(mmd2(particles.edited, particles.source, diag_h))
        for particles, h in iter_tcs(particles, config.tcs):
            bandwidths.append(h)
            if src.N > 2:
                trace.append(mmd2(particles.edited, particles.source, diag_h))
        final_frames[1:] = particles.edited
    final = FrameSequence(final_frames)

    edit = ToyEdit(first_edit - src[0], "first-frame edit")
    report = {
        "variant": variant,
        "n_frames": src.N,
        "dim": src.dim,
        "content_ccs": metric_content(ccs_out, src, edit),
        "content_final": metric_content(final, src, edit),
        "roughness_src": metric_roughness(src),
        "roughness_ccs": metric_roughness(ccs_out),
        "roughness_final": metric_roughness(final),
        "mmd_initial": trace[0] if trace else float("nan"),
        "mmd_final": trace[-1] if trace else float("nan"),
    }
    return EditResult(ccs_out, final, report, trace, bandwidths)
