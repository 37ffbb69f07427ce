"""Flat-text rendering of entity records and its inverse.

An entity renders as one ``[COL] <name> [VAL] <value>`` segment per
attribute, joined by single spaces. Names and values are whitespace-collapsed
and tag literals inside them are escaped, so the rendering parses back
unambiguously. An optional token budget truncates values (never names or
tags), cutting the longest values first so short fields survive intact.
"""

from __future__ import annotations

from typing import Callable

from .corpus import Attribute, Entity
from .errors import BudgetError, DataFormatError

COL_TAG = "[COL]"
VAL_TAG = "[VAL]"
_STRUCTURAL = (COL_TAG, VAL_TAG)

Tokenizer = Callable[[str], list[str]]


def _whitespace_tokens(text: str) -> list[str]:
    return text.split()


def escape_tags(text: str) -> str:
    """Prefix tag literals with a backslash so they read as content."""
    return text.replace(COL_TAG, "\\" + COL_TAG).replace(VAL_TAG, "\\" + VAL_TAG)


def unescape_tags(text: str) -> str:
    """Exact inverse of :func:`escape_tags`."""
    return text.replace("\\" + VAL_TAG, VAL_TAG).replace("\\" + COL_TAG, COL_TAG)


def _content_tokens(text: str, tokenize: Tokenizer) -> list[str]:
    return tokenize(escape_tags(text))


def render_attribute(attr: Attribute, tokenize: Tokenizer = _whitespace_tokens) -> str:
    """Render one attribute segment, escaped and whitespace-collapsed."""
    parts = [COL_TAG, *_content_tokens(attr.name, tokenize), VAL_TAG]
    parts += _content_tokens(attr.value, tokenize)
    return " ".join(parts)


def _truncation_plan(lengths: list[int], budget: int) -> list[int]:
    """Per-value kept-token counts under a shared budget.

    Raises the uniform cap as high as the budget allows, then hands the
    remaining tokens to the longest values one at a time. Values at or below
    the cap are never touched.
    """
    total = sum(lengths)
    if total <= budget:
        return list(lengths)
    cap = 0
    while sum(min(n, cap + 1) for n in lengths) <= budget:
        cap += 1
    kept = [min(n, cap) for n in lengths]
    leftover = budget - sum(kept)
    by_size = sorted(range(len(lengths)), key=lambda i: (-lengths[i], i))
    for i in by_size:
        if leftover == 0:
            break
        if lengths[i] > kept[i]:
            kept[i] += 1
            leftover -= 1
    return kept


def serialize(
    entity: Entity,
    budget: int | None = None,
    tokenize: Tokenizer = _whitespace_tokens,
) -> str:
    """Render an entity to flat text, optionally under a token budget.

    The budget counts whitespace tokens of the final string. Tags and
    attribute names always survive; if they alone exceed the budget a
    :class:`BudgetError` is raised carrying the minimum workable budget.
    """
    names = [_content_tokens(a.name, tokenize) for a in entity.attributes]
    values = [_content_tokens(a.value, tokenize) for a in entity.attributes]
    for ent_name in names:
        if not ent_name:
            raise DataFormatError(
                f"entity {entity.id!r} has an attribute name with no tokens"
            )
    if budget is not None:
        overhead = sum(2 + len(n) for n in names)
        if budget < overhead:
            raise BudgetError(
                f"budget {budget} cannot fit tags and names for entity "
                f"{entity.id!r} (needs at least {overhead})",
                required_minimum=overhead,
            )
        plan = _truncation_plan([len(v) for v in values], budget - overhead)
        values = [v[:k] for v, k in zip(values, plan)]
    parts: list[str] = []
    for name_toks, value_toks in zip(names, values):
        parts += [COL_TAG, *name_toks, VAL_TAG, *value_toks]
    return " ".join(parts)


def parse(text: str) -> list[tuple[str, str]]:
    """Recover (name, value) pairs from rendered text.

    Inverse of :func:`serialize` without a budget, up to whitespace collapse
    inside names and values.
    """
    tokens = text.split()
    if not tokens:
        raise DataFormatError("cannot parse an empty rendering")
    if tokens[0] != COL_TAG:
        raise DataFormatError(f"rendering must start with {COL_TAG}")
    pairs: list[tuple[str, str]] = []
    name: list[str] | None = None
    value: list[str] | None = None

    def flush():
        if name is None:
            return
        if value is None:
            raise DataFormatError(f"attribute {' '.join(name)!r} has no {VAL_TAG}")
        if not name:
            raise DataFormatError(f"empty attribute name before {VAL_TAG}")
        pairs.append((unescape_tags(" ".join(name)), unescape_tags(" ".join(value))))

    for tok in tokens:
        if tok == COL_TAG:
            flush()
            name, value = [], None
        elif tok == VAL_TAG:
            if name is None or value is not None:
                raise DataFormatError(f"unexpected {VAL_TAG} in rendering")
            value = []
        elif value is not None:
            value.append(tok)
        else:
            assert name is not None
            name.append(tok)
    flush()
    return pairs


def token_length(text: str, tokenize: Tokenizer = _whitespace_tokens) -> int:
    """Token count of a rendering under the same tokenizer serialize uses."""
    return len(tokenize(text))


def minimum_budget(entity: Entity, tokenize: Tokenizer = _whitespace_tokens) -> int:
    """Smallest budget that serialize() will accept for this entity."""
    return sum(2 + len(_content_tokens(a.name, tokenize)) for a in entity.attributes)
