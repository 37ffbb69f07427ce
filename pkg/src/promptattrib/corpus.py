"""Entity records, candidate pairs, dataset ingestion, and attribute alignment.

All values are frozen after construction and safe to share across threads.
File formats are line-oriented JSON (UTF-8): entity files carry ``id`` plus an
ordered ``attributes`` payload, pair files carry ``left_id``/``right_id`` and
an optional binary ``label``.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from .errors import DataFormatError

VALID_SPLITS = ("train", "valid", "test")
ALIGNMENT_POLICIES = ("name_match",)
RESIDUAL_KEY = "__rest__"


@dataclass(frozen=True)
class Attribute:
    """A single named field of an entity record.

    The name must be non-empty after trimming; the value may be empty.
    """

    name: str
    value: str = ""

    def __post_init__(self):
        if not self.name.strip():
            raise DataFormatError("attribute name must be non-empty after trimming")


@dataclass(frozen=True)
class Entity:
    """An entity record with an ordered attribute list.

    Attribute order is preserved exactly as ingested; serialization depends
    on it.
    """

    id: str
    attributes: tuple[Attribute, ...]

    def __post_init__(self):
        if not self.id:
            raise DataFormatError("entity id must be non-empty")
        object.__setattr__(self, "attributes", tuple(self.attributes))
        if not self.attributes:
            raise DataFormatError(f"entity {self.id!r} has no attributes")


@dataclass(frozen=True)
class CandidatePair:
    """A candidate match between two entities, optionally labeled 0/1."""

    left: Entity
    right: Entity
    label: int | None = None

    def __post_init__(self):
        if self.label is not None and self.label not in (0, 1):
            raise DataFormatError(
                f"pair ({self.left.id!r}, {self.right.id!r}) has label "
                f"{self.label!r}, expected 0 or 1"
            )


@dataclass(frozen=True)
class AlignedAttributePair:
    """One aligned attribute pair produced by an alignment policy."""

    key: str
    left_attr: Attribute
    right_attr: Attribute


@dataclass(frozen=True)
class Dataset:
    """An entity map plus candidate pairs for one split."""

    entities: Mapping[str, Entity]
    pairs: tuple[CandidatePair, ...]
    split: str

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple(self.pairs))
        if self.split not in VALID_SPLITS:
            raise DataFormatError(
                f"split must be one of {VALID_SPLITS}, got {self.split!r}"
            )
        for pair in self.pairs:
            for ent in (pair.left, pair.right):
                if ent.id not in self.entities:
                    raise DataFormatError(
                        f"pair references unknown entity id {ent.id!r}"
                    )


def _parse_attributes(payload, path: str, line_no: int) -> tuple[Attribute, ...]:
    attrs = []
    if isinstance(payload, dict):
        items = payload.items()
    elif isinstance(payload, list):
        items = []
        for obj in payload:
            if not isinstance(obj, dict) or "name" not in obj:
                raise DataFormatError(
                    f"{path}:{line_no}: attribute entries need a 'name' field"
                )
            items.append((obj["name"], obj.get("value", "")))
    else:
        raise DataFormatError(
            f"{path}:{line_no}: 'attributes' must be a list or an object"
        )
    for name, value in items:
        try:
            attrs.append(Attribute(str(name), "" if value is None else str(value)))
        except DataFormatError as exc:
            raise DataFormatError(f"{path}:{line_no}: {exc}") from exc
    return tuple(attrs)


def load_entities(path: str | Path, format: str = "jsonl") -> dict[str, Entity]:
    """Load an entity file into an id -> Entity map.

    Rejects unparseable lines (naming the line number) and duplicate ids
    (naming the id). Attribute order follows file order.
    """
    if format != "jsonl":
        raise DataFormatError(f"unknown entity-file format {format!r}")
    path = Path(path)
    entities: dict[str, Entity] = {}
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataFormatError(f"{path}:{line_no}: invalid JSON: {exc}") from exc
            if not isinstance(record, dict) or "id" not in record:
                raise DataFormatError(f"{path}:{line_no}: record needs an 'id' field")
            ent_id = str(record["id"])
            if ent_id in entities:
                raise DataFormatError(f"{path}:{line_no}: duplicate entity id {ent_id!r}")
            attrs = _parse_attributes(record.get("attributes", []), str(path), line_no)
            try:
                entities[ent_id] = Entity(ent_id, attrs)
            except DataFormatError as exc:
                raise DataFormatError(f"{path}:{line_no}: {exc}") from exc
    return entities


def load_pairs(path: str | Path, entities: Mapping[str, Entity]) -> list[CandidatePair]:
    """Load a pair file, resolving ids against an entity map.

    Labels are parsed as 0/1 when present and left absent otherwise.
    Unknown ids and out-of-range labels are rejected with the offending value.
    """
    path = Path(path)
    pairs: list[CandidatePair] = []
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataFormatError(f"{path}:{line_no}: invalid JSON: {exc}") from exc
            try:
                left_id = str(record["left_id"])
                right_id = str(record["right_id"])
            except (KeyError, TypeError) as exc:
                raise DataFormatError(
                    f"{path}:{line_no}: record needs 'left_id' and 'right_id'"
                ) from exc
            for ent_id in (left_id, right_id):
                if ent_id not in entities:
                    raise DataFormatError(
                        f"{path}:{line_no}: unknown entity id {ent_id!r}"
                    )
            label = record.get("label")
            if label is not None:
                if label not in (0, 1):
                    raise DataFormatError(
                        f"{path}:{line_no}: label must be 0 or 1, got {label!r}"
                    )
                label = int(label)
            pairs.append(CandidatePair(entities[left_id], entities[right_id], label))
    return pairs


def sample_low_resource(dataset: Dataset, fraction: float, seed: int) -> Dataset:
    """Draw a seeded low-resource subsample of a train split.

    Keeps ceil(fraction * len(pairs)) pairs, selected uniformly without
    replacement. When both labels are present the draw is stratified:
    per-class counts are proportional (integer floor), the remainder goes to
    the majority class, and each present class keeps at least one pair
    whenever two or more pairs are kept. Selected pairs retain dataset order.
    """
    if dataset.split != "train":
        raise DataFormatError(
            f"low-resource sampling applies to the train split, got {dataset.split!r}"
        )
    if not 0.0 < fraction <= 1.0:
        raise DataFormatError(f"fraction must lie in (0, 1], got {fraction}")
    pairs = dataset.pairs
    n = len(pairs)
    if n == 0 or fraction == 1.0:
        return dataset
    # 1e-9 slack keeps float products like 0.07 * 100 from ceiling one too high
    keep = max(1, math.ceil(fraction * n - 1e-9))
    rng = random.Random(seed)
    pos = [i for i, p in enumerate(pairs) if p.label == 1]
    neg = [i for i, p in enumerate(pairs) if p.label == 0]
    if pos and neg and len(pos) + len(neg) == n:
        n_pos = keep * len(pos) // n
        n_neg = keep * len(neg) // n
        rem = keep - n_pos - n_neg
        if len(pos) > len(neg):
            n_pos += rem
        else:
            n_neg += rem
        if keep >= 2 and n_pos == 0:
            n_pos, n_neg = 1, keep - 1
        if keep >= 2 and n_neg == 0:
            n_pos, n_neg = keep - 1, 1
        selected = rng.sample(pos, n_pos) + rng.sample(neg, n_neg)
    else:
        selected = rng.sample(range(n), keep)
    chosen = tuple(pairs[i] for i in sorted(selected))
    return Dataset(dataset.entities, chosen, "train")


def _norm_name(attr: Attribute) -> str:
    return attr.name.strip().lower()


def _residual_text(attrs: list[Attribute]) -> str:
    segments = [f"{a.name.strip()} {a.value.strip()}".strip() for a in attrs]
    return " ".join(seg for seg in segments if seg)


def align_attributes(
    pair: CandidatePair, policy: str = "name_match"
) -> list[AlignedAttributePair]:
    """Pair up attributes across the two entities of a candidate pair.

    The default (and only) policy matches attribute names case-insensitively,
    first occurrence on each side. Unmatched attributes on each side are
    concatenated into one residual text per side; when both residuals are
    non-empty they form one extra pair keyed ``__rest__``. Output order is
    the left entity's attribute order with the residual last.
    """
    if policy not in ALIGNMENT_POLICIES:
        raise DataFormatError(f"unknown alignment policy {policy!r}")
    left_attrs = pair.left.attributes
    right_attrs = pair.right.attributes
    right_first: dict[str, int] = {}
    for j, attr in enumerate(right_attrs):
        right_first.setdefault(_norm_name(attr), j)

    aligned: list[AlignedAttributePair] = []
    matched_left: set[str] = set()
    used_right: set[int] = set()
    left_rest: list[Attribute] = []
    for attr in left_attrs:
        key = _norm_name(attr)
        j = right_first.get(key)
        if key not in matched_left and j is not None and j not in used_right:
            matched_left.add(key)
            used_right.add(j)
            aligned.append(AlignedAttributePair(key, attr, right_attrs[j]))
        else:
            left_rest.append(attr)
    right_rest = [a for j, a in enumerate(right_attrs) if j not in used_right]

    left_text = _residual_text(left_rest)
    right_text = _residual_text(right_rest)
    if left_text and right_text:
        key = RESIDUAL_KEY
        while key in matched_left:  # an attribute literally named __rest__ was matched
            key += "_"
        aligned.append(
            AlignedAttributePair(key, Attribute(key, left_text), Attribute(key, right_text))
        )
    return aligned
