"""Rule-labeled synthetic pair generation over the toy vocabulary.

Labels are decided by construction, not by a model: a pair is positive
iff every attribute value matches exactly, and every negative pair gets
at least one contradicting attribute. Both sides always use the same
number of words per value so sequence length carries no label signal.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path

from .backend import ATTRIBUTE_NAME_WORDS, VALUE_WORDS
from .corpus import Attribute, CandidatePair, Entity
from .errors import ConfigError

SPLIT_FRACTIONS = (0.6, 0.2, 0.2)


@dataclass(frozen=True)
class SyntheticSpec:
    n_pairs: int = 240
    n_attributes: int = 3
    seed: int = 0
    positive_fraction: float = 0.5
    words_per_value: int = 2

    def __post_init__(self):
        if self.n_pairs < 2:
            raise ConfigError("n_pairs must be >= 2")
        if not 1 <= self.n_attributes <= len(ATTRIBUTE_NAME_WORDS):
            raise ConfigError(
                f"n_attributes must lie in [1, {len(ATTRIBUTE_NAME_WORDS)}]"
            )
        if not 0.0 < self.positive_fraction < 1.0:
            raise ConfigError("positive_fraction must lie in (0, 1)")
        if self.words_per_value < 1:
            raise ConfigError("words_per_value must be >= 1")


@dataclass(frozen=True)
class SyntheticData:
    left: tuple[Entity, ...]
    right: tuple[Entity, ...]
    pairs: tuple[CandidatePair, ...]


def _sample_value(rng: random.Random, n_words: int) -> str:
    return " ".join(rng.choice(VALUE_WORDS) for _ in range(n_words))


def _contradicting_value(rng: random.Random, original: str, n_words: int) -> str:
    while True:
        candidate = _sample_value(rng, n_words)
        if candidate != original:
            return candidate


def generate_pairs(spec: SyntheticSpec) -> SyntheticData:
    rng = random.Random(spec.seed)
    names = ATTRIBUTE_NAME_WORDS[: spec.n_attributes]

    n_pos = round(spec.positive_fraction * spec.n_pairs)
    n_pos = min(max(n_pos, 1), spec.n_pairs - 1)
    labels = [1] * n_pos + [0] * (spec.n_pairs - n_pos)
    rng.shuffle(labels)

    left_entities, right_entities, pairs = [], [], []
    for i, label in enumerate(labels):
        left_values = [_sample_value(rng, spec.words_per_value) for _ in names]
        if label == 1:
            right_values = list(left_values)
        else:
            right_values = list(left_values)
            flip = rng.sample(range(len(names)), rng.randint(1, len(names)))
            for j in flip:
                right_values[j] = _contradicting_value(
                    rng, left_values[j], spec.words_per_value
                )
        left = Entity(
            f"L{i:04d}",
            tuple(Attribute(n, v) for n, v in zip(names, left_values)),
        )
        right = Entity(
            f"R{i:04d}",
            tuple(Attribute(n, v) for n, v in zip(names, right_values)),
        )
        left_entities.append(left)
        right_entities.append(right)
        pairs.append(CandidatePair(left, right, label))
    return SyntheticData(tuple(left_entities), tuple(right_entities), tuple(pairs))


def split_pairs(
    pairs: tuple[CandidatePair, ...], seed: int
) -> dict[str, tuple[CandidatePair, ...]]:
    """Shuffled train/valid/test partition; selected pairs keep input order."""
    rng = random.Random(seed)
    order = list(range(len(pairs)))
    rng.shuffle(order)
    n = len(pairs)
    n_train = max(1, round(SPLIT_FRACTIONS[0] * n))
    n_valid = max(1, round(SPLIT_FRACTIONS[1] * n))
    picks = {
        "train": set(order[:n_train]),
        "valid": set(order[n_train : n_train + n_valid]),
        "test": set(order[n_train + n_valid :]),
    }
    return {
        split: tuple(p for i, p in enumerate(pairs) if i in chosen)
        for split, chosen in picks.items()
    }


def _write_entities(path: Path, entities: tuple[Entity, ...]) -> None:
    with path.open("w", encoding="utf-8") as fh:
        for ent in entities:
            record = {
                "id": ent.id,
                "attributes": {a.name: a.value for a in ent.attributes},
            }
            fh.write(json.dumps(record) + "\n")


def _write_pairs(path: Path, pairs: tuple[CandidatePair, ...]) -> None:
    with path.open("w", encoding="utf-8") as fh:
        for p in pairs:
            fh.write(
                json.dumps(
                    {"left_id": p.left.id, "right_id": p.right.id, "label": p.label}
                )
                + "\n"
            )


def write_dataset(data: SyntheticData, out_dir: Path, seed: int) -> dict[str, Path]:
    """Write entity/pair JSONL files plus a starter run.cfg into out_dir."""
    out_dir.mkdir(parents=True, exist_ok=True)
    files = {
        "entities_left": out_dir / "entities_left.jsonl",
        "entities_right": out_dir / "entities_right.jsonl",
        "pairs_train": out_dir / "pairs_train.jsonl",
        "pairs_valid": out_dir / "pairs_valid.jsonl",
        "pairs_test": out_dir / "pairs_test.jsonl",
    }
    _write_entities(files["entities_left"], data.left)
    _write_entities(files["entities_right"], data.right)
    splits = split_pairs(data.pairs, seed)
    _write_pairs(files["pairs_train"], splits["train"])
    _write_pairs(files["pairs_valid"], splits["valid"])
    _write_pairs(files["pairs_test"], splits["test"])

    cfg = out_dir / "run.cfg"
    cfg.write_text(
        "\n".join(
            [
                "data.entities_left = entities_left.jsonl",
                "data.entities_right = entities_right.jsonl",
                "data.pairs_train = pairs_train.jsonl",
                "data.pairs_valid = pairs_valid.jsonl",
                "data.pairs_test = pairs_test.jsonl",
                f"train.seed = {seed}",
                "",
            ]
        ),
        encoding="utf-8",
    )
    files["config"] = cfg
    return files


def rule_label(pair: CandidatePair) -> int:
    """Ground-truth rule: positive iff every aligned value matches exactly."""
    left_map = {a.name: a.value for a in pair.left.attributes}
    right_map = {a.name: a.value for a in pair.right.attributes}
    if left_map.keys() != right_map.keys():
        return 0
    return int(all(left_map[k] == right_map[k] for k in left_map))
