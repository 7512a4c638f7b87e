"""Noise-prediction models.

The reference model is the exact optimal noise predictor for an isotropic
Gaussian mixture pushed through the variance-preserving forward process::

    p_t(z) = sum_k w_k N(z; sqrt(a_t) (mu_k + delta), (1 - a_t + a_t s_k^2) I)
    eps*(z, t) = -sqrt(1 - a_t) * grad_z log p_t(z)

Conditioning shifts every component mean by ``delta``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .schedule import NoiseSchedule

__all__ = [
    "MixtureParams",
    "Conditioning",
    "DenoiserModel",
    "AnalyticMixtureDenoiser",
    "ConstantDenoiser",
    "predict_noise",
    "analytic_mixture_noise",
    "mixture_log_density",
    "mixture_score",
    "score_finite_diff",
]


@dataclass(frozen=True)
class MixtureParams:
    weights: np.ndarray
    means: np.ndarray
    stds: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        mu = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        s = np.asarray(self.stds, dtype=np.float64).reshape(-1)
        if not (len(w) == len(mu) == len(s)) or len(w) == 0:
            raise ValueError("weights, means and stds must describe the same number of components")
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights must be positive and sum to 1, got {w.tolist()}")
        if np.any(s < 0):
            raise ValueError("component stds must be non-negative")
        for arr in (w, mu, s):
            arr.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "stds", s)

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def n_components(self) -> int:
        return len(self.weights)

    @classmethod
    def single(cls, mean, std: float = 0.0) -> MixtureParams:
        return cls(np.ones(1), np.atleast_2d(mean), np.array([std]))

    def to_text(self) -> str:
        """Plain-text block: comma lists for weights/stds, ``;``-separated mean rows."""
        fmt = lambda xs: ", ".join(repr(float(x)) for x in xs)
        return "\n".join(
            [
                f"weights = {fmt(self.weights)}",
                "means = " + "; ".join(fmt(row) for row in self.means),
                f"stds = {fmt(self.stds)}",
            ]
        )

    @classmethod
    def from_text(cls, text: str) -> MixtureParams:
        fields = {}
        for line in text.splitlines():
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ValueError(f"expected 'key = value', got {line!r}")
            fields[key.strip()] = value.strip()
        missing = {"weights", "means", "stds"} - fields.keys()
        if missing:
            raise ValueError(f"mixture block missing {sorted(missing)}")
        floats = lambda s: [float(x) for x in s.split(",")]
        return cls(
            np.array(floats(fields["weights"])),
            np.array([floats(row) for row in fields["means"].split(";")]),
            np.array(floats(fields["stds"])),
        )


@dataclass(frozen=True)
class Conditioning:
    """Edit conditioning. ``edit_shift`` is the decoded displacement that moves
    the data distribution; ``prompt`` is kept for provenance only."""

    prompt: object | None = None
    edit_shift: np.ndarray | None = None

    def shift(self, dim: int) -> np.ndarray:
        if self.edit_shift is None:
            return np.zeros(dim)
        shift = np.asarray(self.edit_shift, dtype=np.float64)
        if shift.shape != (dim,):
            raise ValueError(f"edit shift has shape {shift.shape}, expected ({dim},)")
        return shift


UNCONDITIONED = Conditioning()


class DenoiserModel:
    """Contract for ``eps_theta(z, t, cond)``.

    Subclasses implement :meth:`_predict`; dimension and range checks live here.
    Implementations must be pure and hold no mutable state.
    """

    dim: int
    schedule: NoiseSchedule

    def __call__(self, z, t: int, cond: Conditioning = UNCONDITIONED) -> np.ndarray:
        return predict_noise(self, z, t, cond)

    def _predict(self, z: np.ndarray, t: int, cond: Conditioning) -> np.ndarray:
        raise NotImplementedError


def predict_noise(model: DenoiserModel, z, t: int, cond: Conditioning = UNCONDITIONED) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (model.dim,):
        raise ValueError(f"latent has shape {z.shape}, model expects ({model.dim},)")
    if not 1 <= t <= model.schedule.T:
        raise IndexError(f"timestep {t} outside [1, {model.schedule.T}]")
    return model._predict(z, t, cond)


@dataclass(frozen=True)
class ConstantDenoiser(DenoiserModel):
    """Predicts the same noise everywhere. Zero by default."""

    schedule: NoiseSchedule
    dim: int
    value: np.ndarray | None = None

    def _predict(self, z, t, cond):
        if self.value is None:
            return np.zeros(self.dim)
        return np.array(self.value, dtype=np.float64)


@dataclass(frozen=True)
class AnalyticMixtureDenoiser(DenoiserModel):
    params: MixtureParams
    schedule: NoiseSchedule
    dim: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "dim", self.params.dim)

    def _predict(self, z, t, cond):
        return analytic_mixture_noise(self.params, self.schedule, z, t, cond)


def _marginal(params: MixtureParams, a_t: float, shift: np.ndarray):
    centers = math.sqrt(a_t) * (params.means + shift)
    variances = (1.0 - a_t) + a_t * params.stds**2
    return centers, variances


def _log_components(z, centers, variances, weights):
    d = centers.shape[1]
    sq = np.sum((z - centers) ** 2, axis=1)
    return np.log(weights) - 0.5 * sq / variances - 0.5 * d * np.log(2.0 * np.pi * variances)


def mixture_log_density(params: MixtureParams, schedule: NoiseSchedule, z, t: int, cond: Conditioning = UNCONDITIONED) -> float:
    z = np.asarray(z, dtype=np.float64)
    centers, variances = _marginal(params, schedule.a(t), cond.shift(params.dim))
    logc = _log_components(z, centers, variances, params.weights)
    m = logc.max()
    return float(m + np.log(np.sum(np.exp(logc - m))))


def mixture_score(params: MixtureParams, schedule: NoiseSchedule, z, t: int, cond: Conditioning = UNCONDITIONED) -> np.ndarray:
    """Closed-form ``grad_z log p_t(z)`` with log-sum-exp responsibilities."""
    z = np.asarray(z, dtype=np.float64)
    centers, variances = _marginal(params, schedule.a(t), cond.shift(params.dim))
    logc = _log_components(z, centers, variances, params.weights)
    m = logc.max()
    if not np.isfinite(m):
        raise FloatingPointError(f"mixture log-density not finite at t={t}")
    resp = np.exp(logc - m)
    resp /= resp.sum()
    score = -(resp / variances) @ (z - centers)
    if not np.all(np.isfinite(score)):
        raise FloatingPointError(f"mixture score overflowed at t={t}")
    return score


def analytic_mixture_noise(params: MixtureParams, schedule: NoiseSchedule, z, t: int, cond: Conditioning = UNCONDITIONED) -> np.ndarray:
    return -math.sqrt(1.0 - schedule.a(t)) * mixture_score(params, schedule, z, t, cond)


def score_finite_diff(params: MixtureParams, schedule: NoiseSchedule, z, t: int, h: float = 1e-5, cond: Conditioning = UNCONDITIONED) -> np.ndarray:
    """Central differences of :func:`mixture_log_density`, one coordinate at a time."""
    if h <= 0:
        raise ValueError("finite-difference step must be positive")
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    for i in range(z.size):
        e = np.zeros_like(z)
        e[i] = h
        out[i] = (
            mixture_log_density(params, schedule, z + e, t, cond)
            - mixture_log_density(params, schedule, z - e, t, cond)
        ) / (2.0 * h)
    return out
