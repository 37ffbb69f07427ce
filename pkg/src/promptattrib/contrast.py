"""Dropout-view contrastive regularizer on soft-prompt embeddings.

Two forward passes of the same input under different dropout masks yield two
view embeddings; their Euclidean distance is the regularizer. Positive pairs
only, no in-batch negatives.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .errors import ConfigError
from .seeding import make_generator


@dataclass(frozen=True)
class ViewEmbedding:
    """One view's representation: the hidden state at the mask position."""

    vector: torch.Tensor

    def __post_init__(self):
        if self.vector.dim() != 1:
            raise ValueError(
                f"view embedding must be a vector, got shape {tuple(self.vector.shape)}"
            )
        if not torch.isfinite(self.vector).all():
            raise ValueError("view embedding contains non-finite values")


def dropout_view(soft_embeddings: torch.Tensor, ratio: float, seed: int) -> torch.Tensor:
    """Inverted dropout with a seeded mask.

    Each element is zeroed independently with probability `ratio`; survivors
    scale by 1/(1-ratio) so the expectation is unchanged. Ratio 0 returns
    the input untouched.
    """
    if not 0.0 <= ratio < 1.0:
        raise ConfigError(f"dropout ratio must lie in [0, 1), got {ratio}")
    if ratio == 0.0:
        return soft_embeddings
    gen = make_generator(seed)
    keep = (torch.rand(soft_embeddings.shape, generator=gen) >= ratio)
    return soft_embeddings * keep.to(soft_embeddings.dtype) / (1.0 - ratio)


def contrastive_loss(
    z1: torch.Tensor | ViewEmbedding, z2: torch.Tensor | ViewEmbedding
) -> torch.Tensor:
    """Euclidean distance between two views, batched over leading dims.

    The square root is guarded so identical views give exactly zero loss
    with a zero (not NaN) gradient.
    """
    a = z1.vector if isinstance(z1, ViewEmbedding) else z1
    b = z2.vector if isinstance(z2, ViewEmbedding) else z2
    if a.shape != b.shape:
        raise ValueError(f"view shapes differ: {tuple(a.shape)} vs {tuple(b.shape)}")
    sq = (a - b).pow(2).sum(dim=-1)
    positive = sq > 0
    safe = torch.where(positive, sq, torch.ones_like(sq))
    return torch.where(positive, torch.sqrt(safe), sq)
