"""Checkpoint directories: weights, backend spec, label tables, config.

A checkpoint is a plain directory so every piece stays inspectable:

    manifest.json     backend shape contract and bank layout
    weights.pt        state dicts for backend and soft banks
    verbalizers.json  resolved label word tables
    run.cfg           the exact configuration text of the producing run

Nothing in a checkpoint carries a timestamp, so identical runs produce
byte-identical directories. Loading rebuilds the backend from the manifest
and rejects any spec mismatch with the current implementation rather than
silently reinterpreting weights.
"""

from __future__ import annotations

import json
from pathlib import Path

import torch

from .backend import BackendSpec
from .config import RunConfig, config_to_text, load_run_config
from .errors import BackendError, ConfigError
from .prompt import SoftPromptBank
from .train_eval import TrainedModel, build_model

FORMAT_VERSION = 1

MANIFEST_FILE = "manifest.json"
WEIGHTS_FILE = "weights.pt"
VERBALIZERS_FILE = "verbalizers.json"
CONFIG_FILE = "run.cfg"


def _bank_size(bank: SoftPromptBank | None) -> int | None:
    return None if bank is None else bank.num_tokens


def save_checkpoint(out_dir: str | Path, model: TrainedModel, run: RunConfig) -> Path:
    """Write a checkpoint directory; returns its path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    spec = model.backend.spec
    manifest = {
        "format_version": FORMAT_VERSION,
        "backend": {
            "name": run.backend_name,
            "seed": run.resolved_backend_seed,
            "embedding_dim": spec.embedding_dim,
            "max_length": spec.max_length,
            "vocab": list(spec.vocab),
        },
        "banks": {
            "entity": _bank_size(model.entity_bank),
            "attribute": _bank_size(model.attribute_bank),
            "shared": model.attribute_bank is model.entity_bank
            and model.entity_bank is not None,
        },
    }
    (out_dir / MANIFEST_FILE).write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )

    verbalizers = {
        "binary": {
            label: {
                "words": list(model.binary.label_words[label]),
                "ids": list(model.binary.resolved_ids[label]),
            }
            for label in model.binary.labels
        },
        "ternary": {
            label: {
                "words": list(model.ternary.label_words[label]),
                "ids": list(model.ternary.resolved_ids[label]),
            }
            for label in model.ternary.labels
        },
    }
    (out_dir / VERBALIZERS_FILE).write_text(
        json.dumps(verbalizers, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )

    weights = {
        "backend": model.backend.state_dict(),
        "entity_bank": None
        if model.entity_bank is None
        else model.entity_bank.state_dict(),
        "attribute_bank": None
        if model.attribute_bank is None or model.attribute_bank is model.entity_bank
        else model.attribute_bank.state_dict(),
    }
    torch.save(weights, out_dir / WEIGHTS_FILE)

    (out_dir / CONFIG_FILE).write_text(config_to_text(run), encoding="utf-8")
    return out_dir


def load_checkpoint(ckpt_dir: str | Path) -> tuple[TrainedModel, RunConfig]:
    """Rebuild a trained model from a checkpoint directory.

    The manifest's backend spec must match what this implementation builds;
    any drift (vocabulary, dimensions, length limit) is a hard error.
    """
    ckpt_dir = Path(ckpt_dir)
    manifest_path = ckpt_dir / MANIFEST_FILE
    if not manifest_path.is_file():
        raise ConfigError(f"not a checkpoint directory: {ckpt_dir}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    if manifest.get("format_version") != FORMAT_VERSION:
        raise ConfigError(
            f"unsupported checkpoint format {manifest.get('format_version')!r}"
        )
    backend_info = manifest["backend"]
    if backend_info["name"] != "toy":
        raise BackendError(f"unknown backend {backend_info['name']!r} in checkpoint")

    run = load_run_config(ckpt_dir / CONFIG_FILE)
    model = build_model(
        run.train,
        backend_seed=backend_info["seed"],
        max_length=backend_info["max_length"],
    )

    stored = BackendSpec(
        vocab=tuple(backend_info["vocab"]),
        embedding_dim=backend_info["embedding_dim"],
        max_length=backend_info["max_length"],
    )
    if stored != model.backend.spec:
        raise BackendError(
            "checkpoint backend spec does not match this implementation; "
            "refusing to load weights into a different architecture"
        )
    banks = manifest["banks"]
    if banks["entity"] != _bank_size(model.entity_bank) or banks[
        "attribute"
    ] != _bank_size(model.attribute_bank):
        raise BackendError(
            "checkpoint bank layout does not match the stored configuration"
        )

    weights = torch.load(ckpt_dir / WEIGHTS_FILE, weights_only=True)
    model.backend.load_state_dict(weights["backend"])
    if model.entity_bank is not None:
        model.entity_bank.load_state_dict(weights["entity_bank"])
    if (
        model.attribute_bank is not None
        and model.attribute_bank is not model.entity_bank
    ):
        model.attribute_bank.load_state_dict(weights["attribute_bank"])
    model.backend.requires_grad_(not run.train.freeze_backbone)
    return model, run


def state_dicts_equal(a: dict, b: dict) -> bool:
    if a.keys() != b.keys():
        return False
    return all(torch.equal(a[k], b[k]) for k in a)


def checkpoints_equal(dir_a: str | Path, dir_b: str | Path) -> bool:
    """Byte-compare the text files and tensor-compare the weights."""
    dir_a, dir_b = Path(dir_a), Path(dir_b)
    for name in (MANIFEST_FILE, VERBALIZERS_FILE, CONFIG_FILE):
        if (dir_a / name).read_bytes() != (dir_b / name).read_bytes():
            return False
    wa = torch.load(dir_a / WEIGHTS_FILE, weights_only=True)
    wb = torch.load(dir_b / WEIGHTS_FILE, weights_only=True)
    if wa.keys() != wb.keys():
        return False
    for key in wa:
        if (wa[key] is None) != (wb[key] is None):
            return False
        if wa[key] is not None and not state_dicts_equal(wa[key], wb[key]):
            return False
    return True
