"""Prompt templates, soft-prompt tokens, and verbalizers.

A rendering is a flat sequence of slots, each either a vocabulary token id or
a reference into a bank of learnable soft-prompt vectors, with the cloze
position(s) recorded. Verbalizers map the mask-position vocabulary
distribution to a distribution over task labels by summing the probability
mass of each label's word set.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Protocol, Sequence

import torch
from torch import nn

from .corpus import AlignedAttributePair, Attribute, CandidatePair, Entity
from .errors import BudgetError, ConfigError, VerbalizerError
from .seeding import deterministic_init_
from .serialize import minimum_budget, serialize

logger = logging.getLogger(__name__)

TEMPLATES = ("t1", "t2", "continuous")

BINARY_LABEL_WORDS: dict[str, tuple[str, ...]] = {
    "yes": ("matched", "similar", "relevant"),
    "no": ("mismatched", "different", "irrelevant"),
}
TERNARY_LABEL_WORDS: dict[str, tuple[str, ...]] = {
    "same": ("same", "similar", "positive"),
    "different": ("mismatched", "different", "irrelevant"),
    "ambiguous": ("uncertain", "unclear", "neutral"),
}

WARM_START_WORDS = ("entity", "match", "question")


class TokenVocab(Protocol):
    """What a rendering needs from a tokenizer/vocabulary."""

    @property
    def mask_id(self) -> int: ...

    def encode(self, text: str) -> list[int]:
        """Tokenize text to ids; unknown tokens map to a catch-all id."""
        ...

    def lookup_word(self, word: str) -> int | None:
        """Id of a word that is exactly one in-vocabulary token, else None."""
        ...


@dataclass(frozen=True)
class SoftSlot:
    """Reference to one row of a SoftPromptBank."""

    index: int


Slot = int | SoftSlot


@dataclass(frozen=True)
class PromptRendering:
    """A templated input: token ids, soft-slot references, mask positions."""

    slots: tuple[Slot, ...]
    mask_positions: tuple[int, ...]
    soft_slot_ids: tuple[int, ...] = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "slots", tuple(self.slots))
        object.__setattr__(self, "mask_positions", tuple(self.mask_positions))
        if not self.mask_positions:
            raise ConfigError("a rendering needs at least one mask position")
        for pos in self.mask_positions:
            if not 0 <= pos < len(self.slots):
                raise ConfigError(
                    f"mask position {pos} out of range for {len(self.slots)} slots"
                )
        soft = tuple(s.index for s in self.slots if isinstance(s, SoftSlot))
        object.__setattr__(self, "soft_slot_ids", soft)

    def __len__(self) -> int:
        return len(self.slots)


def _encode_serialized(
    entity: Entity, vocab: TokenVocab, budget: int | None
) -> list[int]:
    return vocab.encode(serialize(entity, budget=budget))


def _split_budget(
    budget: int | None, overhead: int, left: Entity, right: Entity
) -> tuple[int | None, int | None]:
    """Reserve template overhead, then give each side half of what remains."""
    if budget is None:
        return None, None
    need = overhead + 2 * max(minimum_budget(left), minimum_budget(right))
    if budget < need:
        raise BudgetError(
            f"budget {budget} too small for the template (needs at least {need})",
            required_minimum=need,
        )
    half = (budget - overhead) // 2
    return half, half


def _soft_group(start: int, count: int) -> list[Slot]:
    return [SoftSlot(start + i) for i in range(count)]


def render_entity_prompt(
    pair: CandidatePair,
    template: str,
    vocab: TokenVocab,
    budget: int | None = None,
    soft_tokens_per_slot: int = 3,
) -> PromptRendering:
    """Render a candidate pair under one of the entity-level templates.

    Hard templates wrap the two serialized entities in fixed words; the
    continuous template replaces them with three groups of
    ``soft_tokens_per_slot`` learnable slots. The result always has exactly
    one mask. The token budget, when given, reserves the template tokens and
    splits the rest evenly between the two serializations.
    """
    if template not in TEMPLATES:
        raise ConfigError(f"template must be one of {TEMPLATES}, got {template!r}")
    p = soft_tokens_per_slot
    if template == "continuous" and p < 1:
        raise ConfigError("continuous template needs at least one soft token per slot")
    overhead = {"t1": 4, "t2": 3, "continuous": 3 * p + 1}[template]
    left_budget, right_budget = _split_budget(budget, overhead, pair.left, pair.right)
    left = _encode_serialized(pair.left, vocab, left_budget)
    right = _encode_serialized(pair.right, vocab, right_budget)

    slots: list[Slot]
    if template == "t1":
        slots = [*vocab.encode("Are"), *left, *vocab.encode("and"), *right]
        slots += vocab.encode("the")
        mask_at = len(slots)
        slots.append(vocab.mask_id)
    elif template == "t2":
        slots = [*left, *vocab.encode("is")]
        mask_at = len(slots)
        slots += [vocab.mask_id, *vocab.encode("to"), *right]
    else:
        slots = [*_soft_group(0, p), *left, *_soft_group(p, p)]
        mask_at = len(slots)
        slots += [vocab.mask_id, *_soft_group(2 * p, p), *right]
    return PromptRendering(tuple(slots), (mask_at,))


def render_attribute_prompt(
    ap: AlignedAttributePair,
    vocab: TokenVocab,
    budget: int | None = None,
    continuous: bool = False,
    soft_tokens_per_slot: int = 3,
) -> PromptRendering:
    """Render one aligned attribute pair as its own cloze input.

    Layout: ``[COL] <key> [VAL] <left value> is [MASK] to [COL] <key> [VAL]
    <right value>``. In continuous mode a group of soft slots precedes each
    of the two attribute segments and the mask phrase. Exactly one mask.
    """
    p = soft_tokens_per_slot
    if continuous and p < 1:
        raise ConfigError("continuous mode needs at least one soft token per slot")
    left_seg = Entity("_left", (Attribute(ap.key, ap.left_attr.value),))
    right_seg = Entity("_right", (Attribute(ap.key, ap.right_attr.value),))
    overhead = 3 + (3 * p if continuous else 0)
    left_budget, right_budget = _split_budget(budget, overhead, left_seg, right_seg)
    left = _encode_serialized(left_seg, vocab, left_budget)
    right = _encode_serialized(right_seg, vocab, right_budget)

    slots: list[Slot] = []
    if continuous:
        slots += _soft_group(0, p)
    slots += left
    if continuous:
        slots += _soft_group(p, p)
    slots += vocab.encode("is")
    mask_at = len(slots)
    slots += [vocab.mask_id, *vocab.encode("to")]
    if continuous:
        slots += _soft_group(2 * p, p)
    slots += right
    return PromptRendering(tuple(slots), (mask_at,))


class SoftPromptBank(nn.Module):
    """Learnable soft-prompt vectors plus their sequence encoder.

    The encoder (a bidirectional LSTM followed by a two-layer feedforward
    head) contextualizes the raw vectors; its output replaces them at the
    soft slots of a rendering. Shape is preserved: (num_tokens, dim) in and
    out.
    """

    def __init__(
        self,
        num_tokens: int,
        dim: int,
        generator: torch.Generator | None = None,
        init_vectors: torch.Tensor | None = None,
    ):
        super().__init__()
        if num_tokens < 0:
            raise ConfigError(f"num_tokens must be >= 0, got {num_tokens}")
        if dim < 2 or dim % 2:
            raise ConfigError(f"soft-prompt dim must be even and >= 2, got {dim}")
        self.num_tokens = num_tokens
        self.dim = dim
        self.vectors = nn.Parameter(torch.empty(num_tokens, dim))
        self.lstm = nn.LSTM(dim, dim // 2, batch_first=True, bidirectional=True)
        self.head = nn.Sequential(nn.Linear(dim, dim), nn.ReLU(), nn.Linear(dim, dim))
        gen = generator if generator is not None else torch.Generator().manual_seed(0)
        deterministic_init_(self, gen)
        with torch.no_grad():
            if init_vectors is not None:
                if init_vectors.shape != (num_tokens, dim):
                    raise ConfigError(
                        f"init vectors shape {tuple(init_vectors.shape)} does not "
                        f"match ({num_tokens}, {dim})"
                    )
                self.vectors.copy_(init_vectors)
            else:
                self.vectors.normal_(0.0, 0.02, generator=gen)

    def forward(self) -> torch.Tensor:
        if self.num_tokens == 0:
            return self.vectors.reshape(0, self.dim)
        for param in self.parameters():
            if not torch.isfinite(param).all():
                raise ConfigError("soft-prompt parameters contain non-finite values")
        hidden, _ = self.lstm(self.vectors.unsqueeze(0))
        return self.head(hidden).squeeze(0)


def encode_soft_prompts(bank: SoftPromptBank) -> torch.Tensor:
    """Contextualized soft embeddings, shape (num_tokens, dim)."""
    return bank()


def warm_start_vectors(
    embedding_lookup, vocab: TokenVocab, num_tokens: int, dim: int
) -> torch.Tensor | None:
    """Initial soft vectors from the embeddings of a few anchor words.

    The anchor words cycle across slots. Words missing from the vocabulary
    are skipped; returns None when none resolve (caller falls back to random
    init).
    """
    ids = [vocab.lookup_word(w) for w in WARM_START_WORDS]
    ids = [i for i in ids if i is not None]
    if not ids:
        return None
    if num_tokens == 0:
        return torch.zeros(0, dim)
    rows = [embedding_lookup(ids[i % len(ids)]) for i in range(num_tokens)]
    out = torch.stack(rows).detach().clone()
    if out.shape != (num_tokens, dim):
        raise ConfigError(
            f"warm-start embeddings have shape {tuple(out.shape)}, "
            f"expected ({num_tokens}, {dim})"
        )
    return out


@dataclass(frozen=True)
class Verbalizer:
    """Label word sets resolved to single-token vocabulary ids."""

    label_words: Mapping[str, tuple[str, ...]]
    resolved_ids: Mapping[str, tuple[int, ...]]

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(self.label_words)


def resolve_verbalizer(
    label_words: Mapping[str, Sequence[str]], vocab: TokenVocab
) -> Verbalizer:
    """Resolve label word sets against a vocabulary.

    Words that are not exactly one in-vocabulary token are dropped with a
    warning. A label whose set resolves empty is an error: every label must
    stay reachable.
    """
    words_by_label: dict[str, tuple[str, ...]] = {}
    seen: dict[str, str] = {}
    for label, words in label_words.items():
        if not words:
            raise VerbalizerError(f"label {label!r} has an empty word set")
        for w in words:
            if w in seen and seen[w] != label:
                raise VerbalizerError(
                    f"word {w!r} appears under both {seen[w]!r} and {label!r}"
                )
            seen[w] = label
        words_by_label[label] = tuple(words)
    if len(words_by_label) < 2:
        raise VerbalizerError("a verbalizer needs at least two labels")

    resolved: dict[str, tuple[int, ...]] = {}
    for label, words in words_by_label.items():
        ids = []
        for w in words:
            wid = vocab.lookup_word(w)
            if wid is None:
                logger.warning(
                    "label word %r for %r is not a single vocabulary token; dropped",
                    w,
                    label,
                )
            else:
                ids.append(wid)
        if not ids:
            raise VerbalizerError(
                f"no word of label {label!r} survives vocabulary resolution"
            )
        resolved[label] = tuple(ids)
    return Verbalizer(words_by_label, resolved)


def binary_verbalizer(vocab: TokenVocab) -> Verbalizer:
    return resolve_verbalizer(BINARY_LABEL_WORDS, vocab)


def ternary_verbalizer(vocab: TokenVocab) -> Verbalizer:
    return resolve_verbalizer(TERNARY_LABEL_WORDS, vocab)


def label_scores(
    mask_distribution: torch.Tensor, verbalizer: Verbalizer, normalize: bool = True
) -> torch.Tensor:
    """Label-mass tensor from a mask-position vocabulary distribution.

    Works on any leading batch shape: input (..., vocab) gives output
    (..., num_labels) in verbalizer label order. Differentiable.
    """
    cols = []
    for label in verbalizer.labels:
        ids = torch.tensor(verbalizer.resolved_ids[label], dtype=torch.long)
        cols.append(mask_distribution.index_select(-1, ids).sum(dim=-1))
    scores = torch.stack(cols, dim=-1)
    if normalize:
        scores = scores / scores.sum(dim=-1, keepdim=True).clamp_min(1e-30)
    return scores


def verbalize(
    mask_distribution: torch.Tensor | Sequence[float], verbalizer: Verbalizer
) -> dict[str, float]:
    """Normalized label probabilities for one mask distribution.

    The input must be a non-negative vector summing to 1 within 1e-6. Zero
    total label mass means the verbalizer does not overlap the vocabulary and
    is rejected.
    """
    dist = torch.as_tensor(mask_distribution, dtype=torch.float64)
    if dist.dim() != 1:
        raise ValueError(f"expected a 1-d distribution, got shape {tuple(dist.shape)}")
    if (dist < -1e-12).any():
        raise ValueError("mask distribution has negative entries")
    total = float(dist.sum())
    if abs(total - 1.0) > 1e-6:
        raise ValueError(f"mask distribution sums to {total}, expected 1")
    raw = label_scores(dist, verbalizer, normalize=False)
    mass = float(raw.sum())
    if mass <= 0.0:
        raise VerbalizerError("no probability mass on any label word")
    return {
        label: float(raw[i] / mass) for i, label in enumerate(verbalizer.labels)
    }
