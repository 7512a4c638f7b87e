"""Temporal-content consistency sampling: an SVGD-style particle update that
moves the edited frames towards the set of source frames.

Each iteration computes, for every edited particle ``x_i``::

    phi(x_i) = 1/N sum_j [ K(x_j, x_i) (x_j - z_j) + grad_{x_j} K(x_j, x_i) ]
    x_i <- x_i - eta * phi(x_i)

with all ``phi`` evaluated on the pre-update particles. Note the kernel
gradient is taken in its first argument and the whole direction is
subtracted, so with this sign convention the kernel term pulls particles
together rather than apart.
"""

from __future__ import annotations

import math
from collections.abc import Iterator
from dataclasses import dataclass

import numpy as np

from . import _backend

__all__ = [
    "REFERENCE_ETA",
    "ParticleSet",
    "TCSConfig",
    "rbf_kernel",
    "median_bandwidth",
    "phi_hat",
    "phi_hat_all",
    "iter_tcs",
    "tcs_update",
    "mmd2",
]

# step size of the published configuration; reported by the acceptance run, not the default
REFERENCE_ETA = 2.0
BANDWIDTH_FLOOR = 1e-8


@dataclass(frozen=True)
class ParticleSet:
    edited: np.ndarray
    source: np.ndarray

    def __post_init__(self):
        e = np.ascontiguousarray(self.edited, dtype=np.float64)
        s = np.ascontiguousarray(self.source, dtype=np.float64)
        if e.ndim != 2 or e.shape != s.shape or e.shape[0] < 1:
            raise ValueError(f"edited {e.shape} and source {s.shape} must be equal (N, dim) arrays with N >= 1")
        object.__setattr__(self, "edited", e)
        object.__setattr__(self, "source", s)

    @property
    def N(self) -> int:
        return self.edited.shape[0]

    def replace(self, edited) -> ParticleSet:
        return ParticleSet(edited, self.source)


@dataclass(frozen=True)
class TCSConfig:
    """``bandwidth`` is ``"median"`` (recomputed every iteration) or a fixed positive float."""

    eta: float = 0.5
    L: int = 50
    bandwidth: str | float = "median"

    def __post_init__(self):
        if self.eta <= 0:
            raise ValueError(f"eta must be positive, got {self.eta}")
        if self.L < 1:
            raise ValueError(f"L must be >= 1, got {self.L}")
        if isinstance(self.bandwidth, str):
            if self.bandwidth != "median":
                raise ValueError(f"unknown bandwidth policy {self.bandwidth!r}")
        elif not self.bandwidth > 0:
            raise ValueError(f"fixed bandwidth must be positive, got {self.bandwidth}")

    def bandwidth_for(self, particles: ParticleSet) -> float:
        if self.bandwidth == "median":
            return median_bandwidth(np.vstack([particles.edited, particles.source]))
        return float(self.bandwidth)


def rbf_kernel(x, y, h: float) -> tuple[float, np.ndarray]:
    """``exp(-|x - y|^2 / (2 h^2))`` and its gradient in ``x``."""
    if h <= 0:
        raise ValueError("bandwidth must be positive")
    diff = np.asarray(x, dtype=np.float64) - np.asarray(y, dtype=np.float64)
    value = math.exp(-float(diff @ diff) / (2.0 * h * h))
    return value, -diff / (h * h) * value


def median_bandwidth(points) -> float:
    """Median pairwise distance over ``sqrt(2 ln(n + 1))``, floored at 1e-8."""
    pts = np.ascontiguousarray(points, dtype=np.float64)
    n = pts.shape[0]
    if n < 2:
        raise ValueError("median bandwidth needs at least two points")
    d2 = _backend.kernels.pairwise_sq_dists(pts, pts)
    dists = np.sqrt(d2[np.triu_indices(n, k=1)])
    h = float(np.median(dists)) / math.sqrt(2.0 * math.log(n + 1))
    return max(h, BANDWIDTH_FLOOR)


def phi_hat(particles: ParticleSet, query, h: float) -> np.ndarray:
    """Update direction at an arbitrary query point."""
    query = np.asarray(query, dtype=np.float64)
    inv_h2 = 1.0 / (h * h)
    diff = particles.edited - query
    k = np.exp(-0.5 * inv_h2 * np.einsum("ij,ij->i", diff, diff))
    terms = k[:, None] * ((particles.edited - particles.source) - inv_h2 * diff)
    return terms.sum(axis=0) / particles.N


def phi_hat_all(particles: ParticleSet, h: float) -> np.ndarray:
    """:func:`phi_hat` at every edited particle, via the selected kernel backend."""
    return np.asarray(_backend.kernels.svgd_phi(particles.edited, particles.source, float(h)))


def iter_tcs(particles: ParticleSet, config: TCSConfig) -> Iterator[tuple[ParticleSet, float]]:
    """Yield ``(particles, bandwidth_used)`` after each of the ``L`` iterations."""
    for _ in range(config.L):
        h = config.bandwidth_for(particles)
        particles = particles.replace(particles.edited - config.eta * phi_hat_all(particles, h))
        yield particles, h


def tcs_update(particles: ParticleSet, config: TCSConfig) -> ParticleSet:
    for particles, _ in iter_tcs(particles, config):
        pass
    return particles


def mmd2(a, b, h: float) -> float:
    """Unbiased squared MMD between two sample sets under the RBF kernel."""
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    if a.shape[0] < 2 or b.shape[0] < 2:
        raise ValueError("unbiased MMD needs at least two samples per set")
    if h <= 0:
        raise ValueError("bandwidth must be positive")
    return float(_backend.kernels.mmd2_unbiased(a, b, float(h)))
