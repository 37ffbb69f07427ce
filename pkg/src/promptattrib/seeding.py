"""Deterministic seed derivation and parameter initialization.

Every random draw in the package flows through a named stream derived from
one root seed, so different consumers (shuffling, dropout, init) never share
or reorder each other's randomness. Initialization walks parameters in
name-sorted order, which keeps checkpoints bit-identical across runs even if
module construction order changes.
"""

from __future__ import annotations

import hashlib

import torch
from torch import nn


def seed_stream(root_seed: int, purpose: str) -> int:
    """Derive a 63-bit child seed for a named purpose."""
    digest = hashlib.sha256(f"{root_seed}:{purpose}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def make_generator(seed: int) -> torch.Generator:
    gen = torch.Generator()
    gen.manual_seed(seed)
    return gen


@torch.no_grad()
def deterministic_init_(root: nn.Module, gen: torch.Generator) -> None:
    """Re-initialize all standard submodules from one generator.

    Visits modules in name-sorted order so the draw sequence is a function of
    the architecture alone. Bare parameters owned by custom modules are the
    owner's responsibility.
    """
    for _, mod in sorted(root.named_modules(), key=lambda kv: kv[0]):
        if isinstance(mod, nn.Linear):
            mod.weight.normal_(0.0, 0.02, generator=gen)
            if mod.bias is not None:
                mod.bias.zero_()
        elif isinstance(mod, nn.Embedding):
            mod.weight.normal_(0.0, 0.02, generator=gen)
        elif isinstance(mod, nn.LayerNorm):
            mod.weight.fill_(1.0)
            mod.bias.zero_()
        elif isinstance(mod, nn.LSTM):
            k = 1.0 / (mod.hidden_size**0.5)
            for name, param in sorted(mod.named_parameters()):
                if "bias" in name:
                    param.zero_()
                else:
                    param.uniform_(-k, k, generator=gen)
