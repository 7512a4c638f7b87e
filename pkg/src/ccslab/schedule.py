"""Diffusion-time bookkeeping: cumulative-signal schedules, sigma policies,
timestep subsampling and addressable Gaussian noise streams."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "NoiseSchedule",
    "SigmaPolicy",
    "SeededNoiseSource",
    "make_schedule",
    "sigma_at",
    "subsample_timesteps",
    "draw_noise",
    "adjustment_coefficient",
]

# radicand values down to this are rounding noise, not a policy violation
RADICAND_ATOL = 1e-12
# |radicand| below this is treated as exactly zero (sigma at its maximum)
RADICAND_SNAP = 8 * np.finfo(np.float64).eps


@dataclass(frozen=True)
class NoiseSchedule:
    """Cumulative signal coefficients ``alpha[0..T]`` with ``alpha[0] == 1``."""

    T: int
    alpha: np.ndarray
    beta_start: float
    beta_end: float

    def __post_init__(self):
        self.alpha.setflags(write=False)

    def a(self, t: int) -> float:
        if not 0 <= t <= self.T:
            raise IndexError(f"timestep {t} outside [0, {self.T}]")
        return float(self.alpha[t])


def make_schedule(T: int = 1000, beta_start: float = 1e-4, beta_end: float = 2e-2) -> NoiseSchedule:
    """Linear-beta schedule, ``alpha[t] = prod_{s<=t} (1 - beta_s)``.

    Raises:
        ValueError: if ``T < 1`` or the betas are not ``0 < start <= end < 1``.
    """
    if int(T) != T or T < 1:
        raise ValueError(f"T must be a positive integer, got {T!r}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ValueError(
            f"need 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})"
        )
    T = int(T)
    betas = np.linspace(beta_start, beta_end, T, dtype=np.float64)
    alpha = np.empty(T + 1, dtype=np.float64)
    alpha[0] = 1.0
    # sequential product so alpha[t] == alpha[t-1] * (1 - beta_t) bit for bit
    for t in range(1, T + 1):
        alpha[t] = alpha[t - 1] * (1.0 - betas[t - 1])
    return NoiseSchedule(T=T, alpha=alpha, beta_start=float(beta_start), beta_end=float(beta_end))


@dataclass(frozen=True)
class SigmaPolicy:
    """How the stochastic term of a DDIM step is sized.

    ``zero`` is deterministic DDIM, ``ddim-eta`` interpolates towards
    ancestral sampling and ``consistency`` sets ``sigma_t = sqrt(1 - alpha[t-1])``,
    which cancels the direction-pointing term of the step entirely.
    """

    kind: str = "zero"
    eta: float = 0.0

    KINDS = ("zero", "ddim-eta", "consistency")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown sigma policy {self.kind!r}; expected one of {self.KINDS}")
        if self.kind == "ddim-eta" and not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"ddim eta must lie in [0, 1], got {self.eta}")

    @classmethod
    def zero(cls) -> SigmaPolicy:
        return cls("zero")

    @classmethod
    def ddim_eta(cls, eta: float) -> SigmaPolicy:
        return cls("ddim-eta", float(eta))

    @classmethod
    def consistency(cls) -> SigmaPolicy:
        return cls("consistency")

    @classmethod
    def parse(cls, text: str) -> SigmaPolicy:
        """Parse ``zero``, ``consistency`` or ``ddim-eta(0.5)``."""
        text = text.strip()
        if text.startswith("ddim-eta"):
            inner = text[len("ddim-eta"):].strip()
            if not (inner.startswith("(") and inner.endswith(")")):
                raise ValueError(f"malformed sigma policy {text!r}")
            return cls.ddim_eta(float(inner[1:-1]))
        return cls(text)

    def __str__(self):
        return f"ddim-eta({self.eta!r})" if self.kind == "ddim-eta" else self.kind

    @property
    def deterministic(self) -> bool:
        return self.kind == "zero" or (self.kind == "ddim-eta" and self.eta == 0.0)


def sigma_at(schedule: NoiseSchedule, policy: SigmaPolicy, t: int, t_prev: int | None = None) -> float:
    """Noise scale of the step ``t -> t_prev`` (``t_prev`` defaults to ``t - 1``)."""
    if not 1 <= t <= schedule.T:
        raise IndexError(f"timestep {t} outside [1, {schedule.T}]")
    if t_prev is None:
        t_prev = t - 1
    a_t = schedule.a(t)
    a_prev = schedule.a(t_prev)
    if policy.kind == "zero":
        return 0.0
    if policy.kind == "consistency":
        return math.sqrt(1.0 - a_prev)
    return policy.eta * math.sqrt((1.0 - a_prev) / (1.0 - a_t)) * math.sqrt(1.0 - a_t / a_prev)


def adjustment_coefficient(a_prev: float, sigma_t: float, t: int | None = None) -> float:
    """``sqrt(1 - a_prev - sigma_t^2)``, the weight on the predicted noise in a sampling step.

    Rounding-level radicands snap to zero so that the maximal sigma gives an
    exactly zero coefficient instead of ``sqrt(1e-16) ~ 1e-8``.

    Raises:
        ValueError: when the radicand is negative beyond ``RADICAND_ATOL``.
    """
    radicand = (1.0 - a_prev) - sigma_t * sigma_t
    if radicand < -RADICAND_ATOL:
        at = f" at t={t}" if t is not None else ""
        raise ValueError(f"negative radicand {radicand:.3e}{at}: sigma_t={sigma_t} too large")
    if radicand <= RADICAND_SNAP:
        return 0.0
    return math.sqrt(radicand)


def subsample_timesteps(T_full: int, n_steps: int) -> list[int]:
    """Uniform floor-stride timesteps ``T_full, T_full - k, ...`` of length ``n_steps``."""
    if not 1 <= n_steps <= T_full:
        raise ValueError(f"need 1 <= n_steps <= T_full, got n_steps={n_steps}, T_full={T_full}")
    stride = T_full // n_steps
    return [T_full - k * stride for k in range(n_steps)]


@dataclass
class SeededNoiseSource:
    """Standard-normal draws addressed by ``(seed, stream, index)``.

    Every draw gets its own generator keyed on the full triple, so a draw's
    value never depends on what other streams consumed or on the sizes of
    earlier draws.
    """

    seed: int
    stream: int = 0
    index: int = field(default=0)

    def draw(self, dim: int) -> np.ndarray:
        out = self.at(self.index, dim)
        self.index += 1
        return out

    def at(self, index: int, dim: int) -> np.ndarray:
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream, index))
        return np.random.Generator(np.random.PCG64(ss)).standard_normal(dim)

    def substream(self, stream: int) -> SeededNoiseSource:
        return SeededNoiseSource(self.seed, stream)


def draw_noise(source: SeededNoiseSource, dim: int) -> np.ndarray:
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    return source.draw(dim)
