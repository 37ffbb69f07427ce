"""Differentiable fuzzy-rule induction over attribute-level beliefs.

Three fixed rules turn per-attribute (same, different, ambiguous) beliefs
into entity-level scores: the Same score is the geometric mean of the
per-attribute same-probabilities, the Different score is their maximum
different-probability, and the Ambiguous score is the maximum ambiguity
damped by the Different score. Scores normalize to a posterior and train
with cross-entropy.

All core functions are tensor-native and accept any leading batch shape:
beliefs are (..., K, 3) with the last axis ordered (same, different,
ambiguous). Frozen dataclasses cover the boundary where single values are
exchanged with callers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import torch

from .errors import ConfigError

EPS = 1e-12
LABELS = ("same", "different", "ambiguous")
SAME, DIFFERENT, AMBIGUOUS = 0, 1, 2
AMBIGUOUS_POLICIES = ("same", "different")


@dataclass(frozen=True)
class AttributeBelief:
    """Ternary belief about one aligned attribute pair."""

    p_same: float
    p_different: float
    p_ambiguous: float

    def __post_init__(self):
        total = 0.0
        for name in ("p_same", "p_different", "p_ambiguous"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name}={p} outside [0, 1]")
            total += p
        if abs(total - 1.0) > 1e-6:
            raise ValueError(f"belief sums to {total}, expected 1 within 1e-6")


@dataclass(frozen=True)
class EntityScores:
    """Unnormalized rule scores for one candidate pair."""

    s_same: float
    s_different: float
    s_ambiguous: float

    def __post_init__(self):
        for name in ("s_same", "s_different", "s_ambiguous"):
            s = getattr(self, name)
            if not (math.isfinite(s) and 0.0 <= s <= 1.0):
                raise ValueError(f"{name}={s} outside [0, 1]")

    @classmethod
    def from_tensor(cls, scores: torch.Tensor) -> "EntityScores":
        return cls(*(float(v) for v in scores.reshape(3)))


@dataclass(frozen=True)
class EntityPosterior:
    """Normalized ternary posterior for one candidate pair."""

    p_same: float
    p_different: float
    p_ambiguous: float

    def __post_init__(self):
        total = 0.0
        for name in ("p_same", "p_different", "p_ambiguous"):
            p = getattr(self, name)
            if p < 0.0:
                raise ValueError(f"{name}={p} is negative")
            total += p
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"posterior sums to {total}, expected 1 within 1e-9")

    @classmethod
    def from_tensor(cls, posterior: torch.Tensor) -> "EntityPosterior":
        return cls(*(float(v) for v in posterior.reshape(3)))


def beliefs_tensor(
    beliefs: Sequence[AttributeBelief], dtype: torch.dtype = torch.float64
) -> torch.Tensor:
    """Stack boundary beliefs into the (K, 3) tensor the core expects."""
    if len(beliefs) == 0:
        raise ValueError("need at least one attribute belief")
    rows = [[b.p_same, b.p_different, b.p_ambiguous] for b in beliefs]
    return torch.tensor(rows, dtype=dtype)


def _check_beliefs(beliefs: torch.Tensor) -> None:
    if beliefs.dim() < 2 or beliefs.shape[-1] != 3:
        raise ValueError(
            f"beliefs must have shape (..., K, 3), got {tuple(beliefs.shape)}"
        )
    if beliefs.shape[-2] < 1:
        raise ValueError("beliefs must cover at least one attribute pair (K >= 1)")


def hard_max(values: torch.Tensor, dim: int = -1) -> torch.Tensor:
    """Maximum whose subgradient routes to the first maximal element.

    The one-hot mask construction makes tie-breaking explicit instead of
    leaning on backend argmax order.
    """
    peak = values.amax(dim=dim, keepdim=True)
    is_max = values == peak
    first = is_max & (is_max.cumsum(dim=dim) == 1)
    return (values * first.to(values.dtype)).sum(dim=dim)


def smooth_max(values: torch.Tensor, tau: float, dim: int = -1) -> torch.Tensor:
    """Softmax-weighted mean: a smooth lower envelope of max.

    Stays within [min, max] of the inputs, so probability inputs keep the
    [0, 1] score invariant. Approaches the hard max as tau goes to 0.
    """
    if tau <= 0:
        raise ConfigError(f"smooth-max temperature must be positive, got {tau}")
    weights = torch.softmax(values / tau, dim=dim)
    return (weights * values).sum(dim=dim)


def _max_over_attributes(values: torch.Tensor, smooth_tau: float | None) -> torch.Tensor:
    if smooth_tau is None:
        return hard_max(values, dim=-1)
    return smooth_max(values, smooth_tau, dim=-1)


def score_same(beliefs: torch.Tensor) -> torch.Tensor:
    """Geometric mean of per-attribute same-probabilities, (..., K, 3) -> (...).

    Computed in log space with inputs clamped to [EPS, 1], so exact zeros
    stay finite and differentiable.
    """
    _check_beliefs(beliefs)
    logs = torch.log(beliefs[..., SAME].clamp(EPS, 1.0))
    return torch.exp(logs.mean(dim=-1))


def score_different(
    beliefs: torch.Tensor, smooth_tau: float | None = None
) -> torch.Tensor:
    """Maximum per-attribute different-probability, (..., K, 3) -> (...)."""
    _check_beliefs(beliefs)
    return _max_over_attributes(beliefs[..., DIFFERENT], smooth_tau)


def score_ambiguous(
    beliefs: torch.Tensor, smooth_tau: float | None = None
) -> torch.Tensor:
    """Maximum ambiguity damped by the Different score, (..., K, 3) -> (...)."""
    _check_beliefs(beliefs)
    peak = _max_over_attributes(beliefs[..., AMBIGUOUS], smooth_tau)
    return peak * (1.0 - score_different(beliefs, smooth_tau))


def entity_scores(
    beliefs: torch.Tensor, smooth_tau: float | None = None
) -> torch.Tensor:
    """All three rule scores stacked on the last axis, (..., K, 3) -> (..., 3)."""
    return torch.stack(
        [
            score_same(beliefs),
            score_different(beliefs, smooth_tau),
            score_ambiguous(beliefs, smooth_tau),
        ],
        dim=-1,
    )


def normalize_scores(scores: torch.Tensor) -> torch.Tensor:
    """Scores to posterior by dividing out Z, (..., 3) -> (..., 3)."""
    if scores.shape[-1] != 3:
        raise ValueError(f"scores must have shape (..., 3), got {tuple(scores.shape)}")
    if not torch.isfinite(scores).all():
        raise ValueError("scores contain non-finite values")
    z = scores.sum(dim=-1, keepdim=True)
    if (z <= 0).any():
        raise ValueError("score normalizer Z must be positive")
    return scores / z


def induce_posterior(
    beliefs: torch.Tensor, smooth_tau: float | None = None
) -> torch.Tensor:
    """Full rule chain: beliefs (..., K, 3) -> posterior (..., 3)."""
    return normalize_scores(entity_scores(beliefs, smooth_tau))


def fuzzy_loss(posterior: torch.Tensor, target: int | torch.Tensor) -> torch.Tensor:
    """Cross-entropy against a ternary target, (..., 3) -> (...).

    The picked probability is floored at EPS so a confidently wrong rule
    chain yields a large but finite loss.
    """
    if posterior.shape[-1] != 3:
        raise ValueError(
            f"posterior must have shape (..., 3), got {tuple(posterior.shape)}"
        )
    idx = torch.as_tensor(target, dtype=torch.long, device=posterior.device)
    if (idx < 0).any() or (idx > 2).any():
        raise ValueError("ternary target indices must lie in {0, 1, 2}")
    idx = idx.expand(posterior.shape[:-1]).unsqueeze(-1)
    picked = posterior.gather(-1, idx).squeeze(-1)
    return -torch.log(picked.clamp_min(EPS))


def map_ambiguous_to_binary(posterior: torch.Tensor, policy: str) -> torch.Tensor:
    """Match probability under an ambiguity policy, (..., 3) -> (...).

    Policy "same" counts ambiguous mass as matching; policy "different"
    counts only the Same mass.
    """
    if policy not in AMBIGUOUS_POLICIES:
        raise ConfigError(
            f"ambiguous policy must be one of {AMBIGUOUS_POLICIES}, got {policy!r}"
        )
    if posterior.shape[-1] != 3:
        raise ValueError(
            f"posterior must have shape (..., 3), got {tuple(posterior.shape)}"
        )
    if policy == "same":
        return posterior[..., SAME] + posterior[..., AMBIGUOUS]
    return posterior[..., SAME]


def induce(
    beliefs: Sequence[AttributeBelief], smooth_tau: float | None = None
) -> EntityPosterior:
    """Boundary convenience: belief list in, posterior dataclass out."""
    return EntityPosterior.from_tensor(
        induce_posterior(beliefs_tensor(beliefs), smooth_tau)
    )
