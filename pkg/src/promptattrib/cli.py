"""Command-line entry point.

Subcommands: train, eval, predict, explain, sweep-dropout, gen-synthetic.
Exit codes: 0 success, 1 runtime failure (training, data, backend), 2
configuration or usage problems. All file outputs land under --out with
fixed names (checkpoint/, trace.log, metrics.txt, predictions.txt,
sweep.txt) and contain no timestamps, so reruns are byte-comparable.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import traceback
from dataclasses import asdict, replace
from pathlib import Path

import torch

from .checkpoint import load_checkpoint, save_checkpoint
from .config import SEED_ENV_VAR, RunConfig, load_run_config
from .corpus import CandidatePair, Dataset, Entity, load_entities, load_pairs, sample_low_resource
from .errors import ConfigError, PromptAttribError
from .fuzzy import entity_scores, normalize_scores
from .seeding import seed_stream
from .synthetic import SyntheticSpec, generate_pairs, write_dataset
from .train_eval import (
    MATCH_THRESHOLD,
    build_model,
    evaluate_records,
    predict_pairs,
    prepare_pair,
    predict_prepared,
    train,
)

TRACE_FILE = "trace.log"
METRICS_FILE = "metrics.txt"
PREDICTIONS_FILE = "predictions.txt"
SWEEP_FILE = "sweep.txt"
CHECKPOINT_DIR = "checkpoint"


def _parse_overrides(pairs: list[str]) -> dict[str, str]:
    out: dict[str, str] = {}
    for item in pairs:
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"--set expects key=value, got {item!r}")
        out[key.strip()] = value.strip()
    return out


def _merge_entities(run: RunConfig) -> dict[str, Entity]:
    if run.entities_left is None:
        raise ConfigError("data.entities_left is required")
    entities = load_entities(run.entities_left)
    if run.entities_right is not None:
        for ent_id, ent in load_entities(run.entities_right).items():
            if ent_id in entities and entities[ent_id] != ent:
                raise ConfigError(
                    f"entity id {ent_id!r} appears in both entity files "
                    "with different content"
                )
            entities[ent_id] = ent
    return entities


def _load_split(
    run: RunConfig, entities: dict[str, Entity], which: str
) -> list[CandidatePair] | None:
    path = getattr(run, f"pairs_{which}")
    if path is None:
        return None
    return load_pairs(path, entities)


def _resolve_out(run: RunConfig, flag: str | None) -> Path:
    if flag:
        return Path(flag)
    if run.out_dir is not None:
        return run.out_dir
    raise ConfigError("no output directory: pass --out or set 'out' in the config")


def _write_trace(out_dir: Path, trace: list[dict]) -> None:
    with (out_dir / TRACE_FILE).open("w", encoding="utf-8") as fh:
        for entry in trace:
            fh.write(json.dumps(entry) + "\n")


def _write_predictions(out_dir: Path, records) -> None:
    with (out_dir / PREDICTIONS_FILE).open("w", encoding="utf-8") as fh:
        for r in records:
            fh.write(
                json.dumps(
                    {
                        "left_id": r.left_id,
                        "right_id": r.right_id,
                        "match_score": r.match_score,
                        "label": r.label,
                        "entity_prob": r.entity_prob,
                        "fuzzy_prob": r.fuzzy_prob,
                        "posterior": list(r.posterior),
                        "beliefs": [
                            {"key": key, "belief": list(row)} for key, row in r.beliefs
                        ],
                    }
                )
                + "\n"
            )


def _write_metrics(out_dir: Path, report) -> None:
    (out_dir / METRICS_FILE).write_text(
        json.dumps(asdict(report), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _cmd_train(args: argparse.Namespace) -> int:
    run = load_run_config(args.config, _parse_overrides(args.set))
    out_dir = _resolve_out(run, args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    entities = _merge_entities(run)
    train_pairs = _load_split(run, entities, "train")
    if train_pairs is None:
        raise ConfigError("data.pairs_train is required for training")
    valid_pairs = _load_split(run, entities, "valid")

    cfg = run.train
    if cfg.low_resource_fraction < 1.0:
        sampled = sample_low_resource(
            Dataset(entities, tuple(train_pairs), "train"),
            cfg.low_resource_fraction,
            seed_stream(cfg.seed, "low_resource"),
        )
        train_pairs = list(sampled.pairs)

    model = build_model(cfg, run.resolved_backend_seed, run.backend_max_length)
    result = train(model, train_pairs, valid_pairs)
    _write_trace(out_dir, result.trace)
    save_checkpoint(out_dir / CHECKPOINT_DIR, model, replace(run, out_dir=None))

    eval_pairs = valid_pairs if valid_pairs else train_pairs
    records = predict_pairs(model, eval_pairs)
    _write_metrics(out_dir, evaluate_records(records, eval_pairs))
    print(f"trained {result.epochs_run} epochs; outputs in {out_dir}")
    return 0


def _open_checkpoint(args: argparse.Namespace):
    model, run = load_checkpoint(args.checkpoint)
    if args.set:
        overrides = _parse_overrides(args.set)
        run = load_run_config(
            Path(args.checkpoint) / "run.cfg", overrides
        )
        model.config = run.train
    return model, run


def _eval_pairs_for(args, run, entities) -> list[CandidatePair]:
    if args.pairs:
        return load_pairs(args.pairs, entities)
    pairs = _load_split(run, entities, "test")
    if pairs is None:
        raise ConfigError("no pairs to score: pass --pairs or set data.pairs_test")
    return pairs


def _cmd_eval(args: argparse.Namespace) -> int:
    model, run = _open_checkpoint(args)
    out_dir = _resolve_out(run, args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    entities = _merge_entities(run)
    pairs = _eval_pairs_for(args, run, entities)
    records = predict_pairs(model, pairs)
    report = evaluate_records(records, pairs)
    _write_predictions(out_dir, records)
    _write_metrics(out_dir, report)
    print(
        f"n={report.n} f1={report.f1} accuracy={report.accuracy} "
        f"average_precision={report.average_precision}"
    )
    return 0


def _cmd_predict(args: argparse.Namespace) -> int:
    model, run = _open_checkpoint(args)
    out_dir = _resolve_out(run, args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    entities = _merge_entities(run)
    pairs = _eval_pairs_for(args, run, entities)
    records = predict_pairs(model, pairs)
    _write_predictions(out_dir, records)
    print(f"scored {len(records)} pairs; predictions in {out_dir / PREDICTIONS_FILE}")
    return 0


def _cmd_explain(args: argparse.Namespace) -> int:
    model, run = _open_checkpoint(args)
    entities = _merge_entities(run)
    for ent_id in (args.left_id, args.right_id):
        if ent_id not in entities:
            raise ConfigError(f"unknown entity id {ent_id!r}")
    pair = CandidatePair(entities[args.left_id], entities[args.right_id])
    prepared = prepare_pair(model, pair)
    record = predict_prepared(model, [prepared])[0]

    cfg = model.config
    beliefs = [
        {"key": key, "same": row[0], "different": row[1], "ambiguous": row[2]}
        for key, row in record.beliefs
    ]
    belief_t = torch.tensor([list(row) for _, row in record.beliefs])
    scores_t = entity_scores(belief_t, cfg.tau)
    posterior_t = normalize_scores(scores_t)
    document = {
        "left_id": record.left_id,
        "right_id": record.right_id,
        "beliefs": beliefs,
        "scores": {
            "same": float(scores_t[0]),
            "different": float(scores_t[1]),
            "ambiguous": float(scores_t[2]),
        },
        "posterior": {
            "same": float(posterior_t[0]),
            "different": float(posterior_t[1]),
            "ambiguous": float(posterior_t[2]),
        },
        "entity_head": {"match_probability": record.entity_prob},
        "fuzzy_head": {
            "match_probability": record.fuzzy_prob,
            "ambiguous_policy": cfg.ambiguous_policy,
        },
        "fused": {
            "match_score": record.match_score,
            "label": record.label,
            "threshold": MATCH_THRESHOLD,
        },
    }
    print(json.dumps(document, indent=2))
    return 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    run = load_run_config(args.config, _parse_overrides(args.set))
    out_dir = _resolve_out(run, args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        ratios = [float(r) for r in args.ratios.split(",") if r.strip()]
    except ValueError:
        raise ConfigError(
            f"--ratios expects comma-separated floats, got {args.ratios!r}"
        ) from None
    if not ratios:
        raise ConfigError("--ratios is empty")
    if args.sweep_seeds < 1:
        raise ConfigError("--sweep-seeds must be >= 1")

    entities = _merge_entities(run)
    all_train = _load_split(run, entities, "train")
    if all_train is None:
        raise ConfigError("data.pairs_train is required for sweeping")
    valid_pairs = _load_split(run, entities, "valid")
    score_pairs = valid_pairs or _load_split(run, entities, "test")
    if not score_pairs:
        raise ConfigError("sweeping needs data.pairs_valid or data.pairs_test")

    lines = []
    means = []
    for ratio in ratios:
        f1s = []
        for offset in range(args.sweep_seeds):
            seed = run.train.seed + offset
            cfg = replace(
                run.train,
                seed=seed,
                contrast_ratio=ratio,
                contrastive_enabled=ratio > 0,
            )
            train_pairs = all_train
            if cfg.low_resource_fraction < 1.0:
                sampled = sample_low_resource(
                    Dataset(entities, tuple(all_train), "train"),
                    cfg.low_resource_fraction,
                    seed_stream(seed, "low_resource"),
                )
                train_pairs = list(sampled.pairs)
            model = build_model(cfg, run.resolved_backend_seed, run.backend_max_length)
            train(model, train_pairs, valid_pairs)
            records = predict_pairs(model, score_pairs)
            f1 = evaluate_records(records, score_pairs).f1
            f1s.append(f1)
            lines.append(f"ratio={ratio} seed={seed} f1={f1}")
        means.append(f"ratio={ratio} mean_f1={sum(f1s) / len(f1s)}")
    text = "\n".join(lines + means) + "\n"
    (out_dir / SWEEP_FILE).write_text(text, encoding="utf-8")
    print(text, end="")
    return 0


def _cmd_gen_synthetic(args: argparse.Namespace) -> int:
    if args.seed is not None:
        seed = args.seed
    elif SEED_ENV_VAR in os.environ:
        try:
            seed = int(os.environ[SEED_ENV_VAR])
        except ValueError:
            raise ConfigError(
                f"{SEED_ENV_VAR} must be an integer, got {os.environ[SEED_ENV_VAR]!r}"
            )
    else:
        seed = 0
    spec = SyntheticSpec(
        n_pairs=args.pairs,
        n_attributes=args.attributes,
        seed=seed,
        positive_fraction=args.positive_fraction,
    )
    data = generate_pairs(spec)
    files = write_dataset(data, Path(args.out), seed)
    print(f"wrote {len(data.pairs)} pairs to {args.out}")
    for name in sorted(files):
        print(f"  {name}: {files[name]}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="promptattrib",
        description="Low-resource entity matching with prompted cloze heads.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, config_required: bool):
        if config_required:
            p.add_argument("--config", required=True, help="run config file")
        p.add_argument(
            "--set",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="override a config key (repeatable)",
        )
        p.add_argument("--out", help="output directory")

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    add_common(p, config_required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="score labeled pairs and report metrics")
    p.add_argument("--checkpoint", required=True, help="checkpoint directory")
    p.add_argument("--pairs", help="pair file (defaults to data.pairs_test)")
    add_common(p, config_required=False)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("predict", help="score pairs without requiring labels")
    p.add_argument("--checkpoint", required=True, help="checkpoint directory")
    p.add_argument("--pairs", help="pair file (defaults to data.pairs_test)")
    add_common(p, config_required=False)
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("explain", help="print the full decision breakdown for one pair")
    p.add_argument("--checkpoint", required=True, help="checkpoint directory")
    p.add_argument("--left-id", required=True)
    p.add_argument("--right-id", required=True)
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p.set_defaults(func=_cmd_explain)

    p = sub.add_parser("sweep-dropout", help="train across dropout ratios and seeds")
    add_common(p, config_required=True)
    p.add_argument("--ratios", required=True, help="comma-separated dropout ratios")
    p.add_argument("--sweep-seeds", type=int, default=3, help="seeds per ratio")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("gen-synthetic", help="write a rule-labeled synthetic dataset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--pairs", type=int, default=240)
    p.add_argument("--attributes", type=int, default=3)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--positive-fraction", type=float, default=0.5)
    p.set_defaults(func=_cmd_gen_synthetic)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except PromptAttribError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception:
        traceback.print_exc()
        return 1


if __name__ == "__main__":
    sys.exit(main())
