"""Shared fixtures for the test suite."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from promptattrib.corpus import Attribute, CandidatePair, Dataset, Entity


def make_entity(ent_id: str, *pairs: tuple[str, str]) -> Entity:
    return Entity(ent_id, tuple(Attribute(n, v) for n, v in pairs))


def write_jsonl(path: Path, records: list[dict]) -> Path:
    path.write_text("\n".join(json.dumps(r) for r in records) + "\n", encoding="utf-8")
    return path


@pytest.fixture
def bridge_pair() -> CandidatePair:
    """Two bridge records sharing a name but differing in length."""
    left = make_entity(
        "b1", ("name", "McKees Rocks Bridge"), ("length", "409 m")
    )
    right = make_entity(
        "b2", ("name", "McKees Rocks Bridge"), ("length", "1,900 ft")
    )
    return CandidatePair(left, right, label=1)


@pytest.fixture
def tiny_dataset() -> Dataset:
    entities = {}
    pairs = []
    for i in range(10):
        a = make_entity(f"a{i}", ("name", f"item {i}"), ("size", str(i)))
        b = make_entity(f"b{i}", ("name", f"item {i}"), ("size", str(i + i % 2)))
        entities[a.id] = a
        entities[b.id] = b
        pairs.append(CandidatePair(a, b, label=1 - i % 2))
    return Dataset(entities, tuple(pairs), "train")
