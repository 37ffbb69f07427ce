"""Run configuration: flat key=value files with dotted keys.

A run is described by a small text document, diff-friendly and trivially
parseable: one `key = value` per line, `#` comments, dotted key namespaces.
Command-line overrides are merged on top before validation. Relative paths
resolve against the config file's directory.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Mapping

from .errors import ConfigError

SEED_ENV_VAR = "PROMPTATTRIB_SEED"

TEMPLATE_CHOICES = ("t1", "t2", "continuous")
POLICY_CHOICES = ("same", "different")
SCOPE_CHOICES = ("soft_only", "full_input")
BACKEND_CHOICES = ("toy",)

_TRUE = ("true", "1", "yes", "on")
_FALSE = ("false", "0", "no", "off")


@dataclass(frozen=True)
class TrainConfig:
    """Everything the training loop needs; persisted verbatim in checkpoints."""

    seed: int = 0
    learning_rate: float = 1e-3
    epochs: int = 30
    batch_size: int = 16
    alpha: float = 1.0
    contrast_weight: float = 0.1
    contrast_ratio: float = 0.1
    contrastive_enabled: bool = True
    low_resource_fraction: float = 1.0
    grad_clip: float = 1.0
    patience: int = 0
    template: str = "continuous"
    soft_tokens_per_slot: int = 3
    budget: int = 0
    attribute_budget: int = 0
    share_banks: bool = False
    ambiguous_policy: str = "same"
    smooth_max_tau: float = 0.0
    dropout_scope: str = "soft_only"
    freeze_backbone: bool = True

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError("train.learning_rate must be positive")
        if self.epochs <= 0:
            raise ConfigError("train.epochs must be a positive integer")
        if self.batch_size <= 0:
            raise ConfigError("train.batch_size must be a positive integer")
        if self.alpha < 0:
            raise ConfigError("train.alpha must be >= 0")
        if self.contrast_weight < 0:
            raise ConfigError("contrastive.lambda must be >= 0")
        if not 0.0 <= self.contrast_ratio < 1.0:
            raise ConfigError("contrastive.ratio must lie in [0, 1)")
        if not 0.0 < self.low_resource_fraction <= 1.0:
            raise ConfigError("train.low_resource_fraction must lie in (0, 1]")
        if self.grad_clip <= 0:
            raise ConfigError("train.grad_clip must be positive")
        if self.patience < 0:
            raise ConfigError("train.patience must be >= 0")
        if self.template not in TEMPLATE_CHOICES:
            raise ConfigError(
                f"prompt.template must be one of {TEMPLATE_CHOICES}, got {self.template!r}"
            )
        if self.soft_tokens_per_slot < 1:
            raise ConfigError("prompt.soft_tokens_per_slot must be >= 1")
        if self.budget < 0 or self.attribute_budget < 0:
            raise ConfigError("token budgets must be >= 0 (0 disables truncation)")
        if self.ambiguous_policy not in POLICY_CHOICES:
            raise ConfigError(
                f"fuzzy.ambiguous_policy must be one of {POLICY_CHOICES}, "
                f"got {self.ambiguous_policy!r}"
            )
        if self.smooth_max_tau < 0:
            raise ConfigError("fuzzy.smooth_max_tau must be >= 0 (0 selects hard max)")
        if self.dropout_scope not in SCOPE_CHOICES:
            raise ConfigError(
                f"dropout_scope must be one of {SCOPE_CHOICES}, got {self.dropout_scope!r}"
            )

    @property
    def entity_budget(self) -> int | None:
        return self.budget or None

    @property
    def fuzzy_budget(self) -> int | None:
        return self.attribute_budget or None

    @property
    def tau(self) -> float | None:
        return self.smooth_max_tau or None


@dataclass(frozen=True)
class RunConfig:
    """TrainConfig plus data paths, backend selection, and output directory."""

    train: TrainConfig
    entities_left: Path | None = None
    entities_right: Path | None = None
    pairs_train: Path | None = None
    pairs_valid: Path | None = None
    pairs_test: Path | None = None
    backend_name: str = "toy"
    backend_seed: int | None = None
    backend_max_length: int = 256
    out_dir: Path | None = None

    def __post_init__(self):
        if self.backend_name not in BACKEND_CHOICES:
            raise ConfigError(
                f"backend.name must be one of {BACKEND_CHOICES}, got {self.backend_name!r}"
            )
        if self.backend_max_length <= 0:
            raise ConfigError("backend.max_length must be positive")

    @property
    def resolved_backend_seed(self) -> int:
        return self.train.seed if self.backend_seed is None else self.backend_seed


_KEY_FIELDS = {
    "train.seed": ("seed", int),
    "train.learning_rate": ("learning_rate", float),
    "train.epochs": ("epochs", int),
    "train.batch_size": ("batch_size", int),
    "train.alpha": ("alpha", float),
    "train.low_resource_fraction": ("low_resource_fraction", float),
    "train.grad_clip": ("grad_clip", float),
    "train.patience": ("patience", int),
    "prompt.template": ("template", str),
    "prompt.soft_tokens_per_slot": ("soft_tokens_per_slot", int),
    "prompt.budget": ("budget", int),
    "prompt.attribute_budget": ("attribute_budget", int),
    "prompt.share_banks": ("share_banks", bool),
    "fuzzy.ambiguous_policy": ("ambiguous_policy", str),
    "fuzzy.smooth_max_tau": ("smooth_max_tau", float),
    "contrastive.enabled": ("contrastive_enabled", bool),
    "contrastive.ratio": ("contrast_ratio", float),
    "contrastive.lambda": ("contrast_weight", float),
    "dropout_scope": ("dropout_scope", str),
    "backend.freeze": ("freeze_backbone", bool),
}
_PATH_KEYS = {
    "data.entities_left": "entities_left",
    "data.entities_right": "entities_right",
    "data.pairs_train": "pairs_train",
    "data.pairs_valid": "pairs_valid",
    "data.pairs_test": "pairs_test",
}
_RUN_KEYS = ("backend.name", "backend.seed", "backend.max_length", "out")
KNOWN_KEYS = tuple(sorted({*_KEY_FIELDS, *_PATH_KEYS, *_RUN_KEYS}))


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    """Parse `key = value` lines into a flat string map."""
    out: dict[str, str] = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{line_no}: expected 'key = value', got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if not key:
            raise ConfigError(f"{source}:{line_no}: empty key")
        if key in out:
            raise ConfigError(f"{source}:{line_no}: duplicate key {key!r}")
        out[key] = value.strip()
    return out


def _convert(key: str, value: str, kind):
    try:
        if kind is bool:
            low = value.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(value)
        if kind is int:
            return int(value)
        if kind is float:
            return float(value)
        return value
    except ValueError:
        raise ConfigError(
            f"config key {key!r} has value {value!r}, expected {kind.__name__}"
        ) from None


def build_run_config(
    raw: Mapping[str, str],
    base_dir: Path,
    env: Mapping[str, str] | None = None,
) -> RunConfig:
    """Validate a flat key map and assemble a RunConfig.

    Unknown keys are rejected by name. `train.seed` falls back to the
    PROMPTATTRIB_SEED environment variable when absent.
    """
    env = os.environ if env is None else env
    for key in raw:
        if key not in KNOWN_KEYS:
            raise ConfigError(f"unknown config key {key!r}")

    train_kwargs = {}
    for key, (field_name, kind) in _KEY_FIELDS.items():
        if key in raw:
            train_kwargs[field_name] = _convert(key, raw[key], kind)
    if "seed" not in train_kwargs and SEED_ENV_VAR in env:
        train_kwargs["seed"] = _convert(SEED_ENV_VAR, env[SEED_ENV_VAR], int)
    train = TrainConfig(**train_kwargs)

    run_kwargs: dict = {"train": train}
    for key, field_name in _PATH_KEYS.items():
        if key in raw and raw[key]:
            path = Path(raw[key])
            run_kwargs[field_name] = path if path.is_absolute() else base_dir / path
    if "backend.name" in raw:
        run_kwargs["backend_name"] = raw["backend.name"]
    if "backend.seed" in raw:
        run_kwargs["backend_seed"] = _convert("backend.seed", raw["backend.seed"], int)
    if "backend.max_length" in raw:
        run_kwargs["backend_max_length"] = _convert(
            "backend.max_length", raw["backend.max_length"], int
        )
    if "out" in raw and raw["out"]:
        path = Path(raw["out"])
        run_kwargs["out_dir"] = path if path.is_absolute() else base_dir / path
    return RunConfig(**run_kwargs)


def load_run_config(
    path: str | Path,
    overrides: Mapping[str, str] | None = None,
    env: Mapping[str, str] | None = None,
) -> RunConfig:
    """Load a config file and merge command-line overrides on top."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    raw = parse_config_text(path.read_text(encoding="utf-8"), source=str(path))
    for key, value in (overrides or {}).items():
        raw[key] = value
    return build_run_config(raw, base_dir=path.parent.resolve(), env=env)


def config_to_text(config: RunConfig) -> str:
    """Deterministic re-serialization of a RunConfig, sorted by key.

    Paths are written as given (absolute after resolution), so the text
    reloads to an equivalent config from any directory.
    """
    lines: dict[str, str] = {}
    train = config.train
    field_to_key = {f: k for k, (f, _) in _KEY_FIELDS.items()}
    for f in fields(TrainConfig):
        key = field_to_key[f.name]
        value = getattr(train, f.name)
        lines[key] = str(value).lower() if isinstance(value, bool) else str(value)
    for key, field_name in _PATH_KEYS.items():
        value = getattr(config, field_name)
        if value is not None:
            lines[key] = str(value)
    lines["backend.name"] = config.backend_name
    if config.backend_seed is not None:
        lines["backend.seed"] = str(config.backend_seed)
    lines["backend.max_length"] = str(config.backend_max_length)
    if config.out_dir is not None:
        lines["out"] = str(config.out_dir)
    return "\n".join(f"{k} = {lines[k]}" for k in sorted(lines)) + "\n"
