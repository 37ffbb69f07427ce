"""Masked-LM backend: tokenizer, tiny transformer, soft-vector injection.

The training loop and CLI talk to a backend through three capabilities:
tokenize text, run a forward pass with soft vectors injected at designated
slots, and expose mask-position vocabulary logits. The toy backend here is a
two-block transformer (dim 32) over a ~126-word vocabulary, deterministic
under a seed, small enough that full test-time training stays in seconds.

All stochasticity is owned by the explicit dropout spec; the network itself
applies no internal dropout, which keeps contrastive-view tests exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import torch
from torch import nn

from .contrast import dropout_view
from .errors import BackendError
from .prompt import (
    BINARY_LABEL_WORDS,
    TERNARY_LABEL_WORDS,
    PromptRendering,
    SoftSlot,
)
from .seeding import deterministic_init_, make_generator

PAD, MASK, UNK, COL, VAL = "[PAD]", "[MASK]", "[UNK]", "[COL]", "[VAL]"
SPECIAL_TOKENS = (PAD, MASK, UNK, COL, VAL)
DROPOUT_SCOPES = ("soft_only", "full_input")

_GLUE = ("are", "and", "the", "is", "to")
_ANCHORS = ("entity", "match", "question")
_LABELS = tuple(
    dict.fromkeys(
        w
        for words in (*BINARY_LABEL_WORDS.values(), *TERNARY_LABEL_WORDS.values())
        for w in words
    )
)
ATTRIBUTE_NAME_WORDS = (
    "name", "title", "brand", "model", "price", "year",
    "color", "size", "category", "maker", "weight", "kind",
)
VALUE_WORDS = (
    "red", "blue", "green", "black", "white", "silver", "gold", "gray",
    "small", "large", "mini", "pro", "lite", "ultra", "classic", "compact",
    "premium", "basic", "standard", "deluxe",
    "alpha", "beta", "gamma", "delta", "sigma", "omega",
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight",
    "nine", "ten", "eleven", "twelve", "twenty", "thirty", "forty", "fifty",
    "sixty", "eighty", "hundred", "thousand",
    "phone", "laptop", "tablet", "camera", "watch", "drive", "screen",
    "board", "mouse", "cable", "router", "speaker", "sensor", "engine",
    "wheel", "frame", "seat", "lamp", "desk", "chair", "table", "book",
    "pen", "cup", "fan", "clock", "radio", "printer",
    "gb", "tb", "mm", "cm", "inch", "kg", "gram", "watt", "volt", "meter",
    "liter", "pack", "set", "edition", "version",
)
TOY_VOCAB: tuple[str, ...] = tuple(
    dict.fromkeys(
        (*SPECIAL_TOKENS, *_GLUE, *_ANCHORS, *_LABELS, *ATTRIBUTE_NAME_WORDS, *VALUE_WORDS)
    )
)


@dataclass(frozen=True)
class BackendSpec:
    """Shape contract a backend commits to; stored with every checkpoint."""

    vocab: tuple[str, ...]
    embedding_dim: int
    max_length: int

    def __post_init__(self):
        object.__setattr__(self, "vocab", tuple(self.vocab))
        if len(set(self.vocab)) != len(self.vocab):
            raise BackendError("vocabulary entries must be unique")
        for tok in (MASK, COL, VAL):
            if tok not in self.vocab:
                raise BackendError(f"vocabulary must contain {tok}")
        if self.embedding_dim <= 0 or self.max_length <= 0:
            raise BackendError("embedding_dim and max_length must be positive")


class ToyTokenizer:
    """Whitespace tokenizer over a fixed word list with an unknown bucket.

    Words are lowercased; the structural tags [COL] and [VAL] keep their
    case so serialized text round-trips. Mask and pad ids are never produced
    from text, only inserted programmatically.
    """

    def __init__(self, vocab: Sequence[str] = TOY_VOCAB):
        self.tokens = tuple(vocab)
        self._id = {tok: i for i, tok in enumerate(self.tokens)}
        for tok in SPECIAL_TOKENS:
            if tok not in self._id:
                raise BackendError(f"tokenizer vocabulary must contain {tok}")

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def pad_id(self) -> int:
        return self._id[PAD]

    @property
    def mask_id(self) -> int:
        return self._id[MASK]

    @property
    def unk_id(self) -> int:
        return self._id[UNK]

    def _norm(self, token: str) -> str:
        return token if token in (COL, VAL) else token.lower()

    def encode(self, text: str) -> list[int]:
        return [self._id.get(self._norm(t), self.unk_id) for t in text.split()]

    def lookup_word(self, word: str) -> int | None:
        parts = word.split()
        if len(parts) != 1:
            return None
        wid = self._id.get(self._norm(parts[0]))
        return None if wid == self.unk_id else wid

    def decode(self, ids: Sequence[int]) -> str:
        return " ".join(self.tokens[i] for i in ids)


@dataclass
class ForwardResult:
    """Hidden states and mask-position logits of one forward pass."""

    hidden_states: torch.Tensor
    mask_logits: torch.Tensor

    def __post_init__(self):
        if not torch.isfinite(self.hidden_states).all():
            raise BackendError("hidden states contain non-finite values")
        if not torch.isfinite(self.mask_logits).all():
            raise BackendError("mask logits contain non-finite values")


class _Block(nn.Module):
    """Pre-norm self-attention block with a small feedforward."""

    def __init__(self, dim: int, heads: int):
        super().__init__()
        if dim % heads:
            raise BackendError(f"dim {dim} not divisible by heads {heads}")
        self.heads = heads
        self.ln1 = nn.LayerNorm(dim)
        self.qkv = nn.Linear(dim, 3 * dim)
        self.proj = nn.Linear(dim, dim)
        self.ln2 = nn.LayerNorm(dim)
        self.ffn = nn.Sequential(nn.Linear(dim, 2 * dim), nn.GELU(), nn.Linear(2 * dim, dim))

    def forward(self, x: torch.Tensor, key_bias: torch.Tensor) -> torch.Tensor:
        b, length, dim = x.shape
        hd = dim // self.heads
        q, k, v = self.qkv(self.ln1(x)).split(dim, dim=-1)
        q = q.view(b, length, self.heads, hd).transpose(1, 2)
        k = k.view(b, length, self.heads, hd).transpose(1, 2)
        v = v.view(b, length, self.heads, hd).transpose(1, 2)
        scores = q @ k.transpose(-2, -1) / math.sqrt(hd) + key_bias
        att = scores.softmax(dim=-1)
        mixed = (att @ v).transpose(1, 2).reshape(b, length, dim)
        x = x + self.proj(mixed)
        return x + self.ffn(self.ln2(x))


class ToyBackend(nn.Module):
    """Two-block masked LM over the toy vocabulary.

    Exposes single-example `forward_masked` (used everywhere determinism of
    exact values matters) and `forward_batch` (used by the training loop for
    throughput). Both inject soft vectors at soft slots and report
    mask-position logits.
    """

    def __init__(self, seed: int, max_length: int = 256, dim: int = 32, heads: int = 4):
        super().__init__()
        self.tokenizer = ToyTokenizer()
        self.spec = BackendSpec(self.tokenizer.tokens, dim, max_length)
        vocab_size = len(self.tokenizer)
        self.tok_emb = nn.Embedding(vocab_size, dim)
        self.pos_emb = nn.Embedding(max_length, dim)
        self.blocks = nn.ModuleList([_Block(dim, heads) for _ in range(2)])
        self.ln_out = nn.LayerNorm(dim)
        self.mlm_head = nn.Sequential(
            nn.Linear(dim, dim), nn.GELU(), nn.LayerNorm(dim), nn.Linear(dim, vocab_size)
        )
        deterministic_init_(self, make_generator(seed))

    @property
    def embedding_dim(self) -> int:
        return self.spec.embedding_dim

    @property
    def max_length(self) -> int:
        return self.spec.max_length

    def embedding_row(self, token_id: int) -> torch.Tensor:
        return self.tok_emb.weight[token_id]

    def _inject(
        self, rendering: PromptRendering, soft_embeddings: torch.Tensor | None
    ) -> torch.Tensor:
        if len(rendering) > self.max_length:
            raise BackendError(
                f"rendering length {len(rendering)} exceeds max_length {self.max_length}"
            )
        need = max(rendering.soft_slot_ids, default=-1) + 1
        if need:
            if soft_embeddings is None:
                raise BackendError("rendering has soft slots but no soft embeddings")
            if soft_embeddings.dim() != 2 or soft_embeddings.shape[0] < need:
                raise BackendError(
                    f"soft embeddings cover {tuple(soft_embeddings.shape)}, "
                    f"rendering needs {need} slots"
                )
            if soft_embeddings.shape[1] != self.embedding_dim:
                raise BackendError(
                    f"soft embedding dim {soft_embeddings.shape[1]} != backend dim "
                    f"{self.embedding_dim}"
                )
        rows = [
            soft_embeddings[slot.index] if isinstance(slot, SoftSlot)
            else self.tok_emb.weight[slot]
            for slot in rendering.slots
        ]
        return torch.stack(rows)

    @staticmethod
    def _soft_positions(rendering: PromptRendering) -> list[int]:
        return [i for i, s in enumerate(rendering.slots) if isinstance(s, SoftSlot)]

    def _apply_dropout(
        self,
        x: torch.Tensor,
        soft_rows: list[int],
        dropout_spec: tuple[float, int] | None,
        dropout_scope: str,
    ) -> torch.Tensor:
        if dropout_spec is None:
            return x
        ratio, seed = dropout_spec
        if not 0.0 <= ratio < 1.0:
            raise BackendError(f"dropout ratio must lie in [0, 1), got {ratio}")
        if dropout_scope not in DROPOUT_SCOPES:
            raise BackendError(
                f"dropout scope must be one of {DROPOUT_SCOPES}, got {dropout_scope!r}"
            )
        if ratio == 0.0:
            return x
        scaled = dropout_view(x, ratio, seed)
        if dropout_scope == "full_input":
            return scaled
        out = x.clone()
        if soft_rows:
            idx = torch.tensor(soft_rows, dtype=torch.long)
            out[idx] = scaled[idx]
        return out

    def _encode(self, x: torch.Tensor, key_bias: torch.Tensor) -> torch.Tensor:
        length = x.shape[1]
        positions = torch.arange(length, device=x.device)
        h = x + self.pos_emb(positions)
        for block in self.blocks:
            h = block(h, key_bias)
        return self.ln_out(h)

    def forward_masked(
        self,
        rendering: PromptRendering,
        soft_embeddings: torch.Tensor | None = None,
        dropout_spec: tuple[float, int] | None = None,
        dropout_scope: str = "soft_only",
    ) -> ForwardResult:
        """Run one rendering; returns hidden states and mask logits.

        Soft slots take rows of `soft_embeddings`; with a `(ratio, seed)`
        dropout spec, inverted dropout hits the injected soft vectors (or
        the whole input matrix under the full_input scope) before encoding.
        """
        x = self._inject(rendering, soft_embeddings)
        x = self._apply_dropout(x, self._soft_positions(rendering), dropout_spec, dropout_scope)
        key_bias = torch.zeros(1, 1, 1, x.shape[0])
        hidden = self._encode(x.unsqueeze(0), key_bias).squeeze(0)
        mask_rows = hidden[list(rendering.mask_positions)]
        return ForwardResult(hidden, self.mlm_head(mask_rows))

    def forward_batch(
        self,
        renderings: Sequence[PromptRendering],
        soft_embeddings: torch.Tensor | None = None,
        dropout_spec: tuple[float, int] | None = None,
        dropout_scope: str = "soft_only",
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """Padded batch forward; returns (mask_hidden, mask_logits).

        Each rendering contributes its first mask position. Padding columns
        are excluded from attention with an additive bias large enough to
        zero their weight without producing non-finite values.
        """
        if not renderings:
            raise BackendError("forward_batch needs at least one rendering")
        max_len = max(len(r) for r in renderings)
        if max_len > self.max_length:
            raise BackendError(
                f"rendering length {max_len} exceeds max_length {self.max_length}"
            )
        batch, real = [], []
        for r in renderings:
            x = self._inject(r, soft_embeddings)
            pad_rows = max_len - x.shape[0]
            if pad_rows:
                pad = self.tok_emb.weight[self.tokenizer.pad_id].expand(pad_rows, -1)
                x = torch.cat([x, pad])
            batch.append(x)
            real.append([True] * len(r) + [False] * pad_rows)
        x = torch.stack(batch)
        if dropout_spec is not None and dropout_spec[0] > 0.0:
            ratio, seed = dropout_spec
            if not 0.0 <= ratio < 1.0:
                raise BackendError(f"dropout ratio must lie in [0, 1), got {ratio}")
            scaled = dropout_view(x, ratio, seed)
            if dropout_scope == "full_input":
                x = scaled
            elif dropout_scope == "soft_only":
                chosen = torch.zeros(x.shape[:2], dtype=torch.bool)
                for b, r in enumerate(renderings):
                    for pos in self._soft_positions(r):
                        chosen[b, pos] = True
                x = torch.where(chosen.unsqueeze(-1), scaled, x)
            else:
                raise BackendError(
                    f"dropout scope must be one of {DROPOUT_SCOPES}, got {dropout_scope!r}"
                )
        real_t = torch.tensor(real)
        key_bias = torch.where(real_t, 0.0, -1e9).view(len(renderings), 1, 1, max_len)
        hidden = self._encode(x, key_bias)
        rows = torch.arange(len(renderings))
        mask_pos = torch.tensor([r.mask_positions[0] for r in renderings])
        mask_hidden = hidden[rows, mask_pos]
        return mask_hidden, self.mlm_head(mask_hidden)


def make_toy_backend(seed: int, max_length: int = 256) -> ToyBackend:
    """Seed-deterministic toy masked LM."""
    return ToyBackend(seed=seed, max_length=max_length)
