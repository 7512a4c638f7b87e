"""The 2x2 visual-prompting layout and the edit-direction prompt.

Frames are latents, so the grid is four slots rather than a tiled tensor:
the upper row holds the example pair (first source, first edit), the lower
left the query frame, and the lower right is the region to generate.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Role",
    "GridState",
    "PromptVector",
    "Embedder",
    "IdentityEmbedder",
    "RandomProjectionEmbedder",
    "make_mask",
    "compose_grid",
    "edit_prompt",
]


class Role(enum.Enum):
    FIXED = "fixed"
    GENERATE = "generate"


QUADRANTS = ("ul", "ur", "ll", "lr")


def make_mask() -> tuple[Role, Role, Role, Role]:
    """Quadrant roles in ``(ul, ur, ll, lr)`` order; only the lower right is generated."""
    return (Role.FIXED, Role.FIXED, Role.FIXED, Role.GENERATE)


@dataclass(frozen=True)
class GridState:
    quad_ul: np.ndarray
    quad_ur: np.ndarray
    quad_ll: np.ndarray
    quad_lr: np.ndarray | None = None
    mask: tuple[Role, Role, Role, Role] = make_mask()

    @property
    def dim(self) -> int:
        return self.quad_ul.shape[0]

    def quadrants(self) -> tuple:
        return (self.quad_ul, self.quad_ur, self.quad_ll, self.quad_lr)

    def with_generated(self, latent) -> GridState:
        return GridState(self.quad_ul, self.quad_ur, self.quad_ll, np.asarray(latent), self.mask)


def compose_grid(first_src, first_edit, query) -> GridState:
    first_src, first_edit, query = (np.asarray(x, dtype=np.float64) for x in (first_src, first_edit, query))
    if not (first_src.shape == first_edit.shape == query.shape) or first_src.ndim != 1:
        raise ValueError(
            f"grid quadrants must be equal-length vectors, got {first_src.shape}, "
            f"{first_edit.shape}, {query.shape}"
        )
    return GridState(first_src, first_edit, query)


class Embedder:
    """Frame latent -> embedding, with a decode map back to latent displacements."""

    def embed(self, x) -> np.ndarray:
        raise NotImplementedError

    def decode(self, v) -> np.ndarray:
        raise NotImplementedError


class IdentityEmbedder(Embedder):
    def embed(self, x):
        return np.asarray(x, dtype=np.float64)

    def decode(self, v):
        return np.asarray(v, dtype=np.float64)


class RandomProjectionEmbedder(Embedder):
    """Fixed Gaussian projection to ``embed_dim >= dim``; decodes with the
    pseudo-inverse, which is exact on differences of embedded frames."""

    def __init__(self, dim: int, embed_dim: int | None = None, seed: int = 0):
        embed_dim = embed_dim or 2 * dim
        if embed_dim < dim:
            raise ValueError("embedding must not be lower-dimensional than the latent")
        rng = np.random.default_rng(seed)
        self.matrix = rng.standard_normal((embed_dim, dim)) / np.sqrt(embed_dim)
        self.pinv = np.linalg.pinv(self.matrix)

    def embed(self, x):
        return self.matrix @ np.asarray(x, dtype=np.float64)

    def decode(self, v):
        return self.pinv @ np.asarray(v, dtype=np.float64)


@dataclass(frozen=True)
class PromptVector:
    p: np.ndarray
    lambda1: float


def edit_prompt(embedder: Embedder, first_edit, first_src, lambda1: float = 0.7) -> PromptVector:
    """Scaled embedding difference between the edited and source first frames."""
    if lambda1 <= 0:
        raise ValueError(f"lambda1 must be positive, got {lambda1}")
    diff = embedder.embed(first_edit) - embedder.embed(first_src)
    return PromptVector(lambda1 * diff, float(lambda1))
