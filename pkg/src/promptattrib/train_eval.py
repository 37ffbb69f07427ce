"""Training loop, pairwise prediction, and evaluation metrics.

The composite objective is

    L_total = L_entity + alpha * L_fuzzy + lambda * L_contrast

where L_entity is cross-entropy of the verbalized entity-level cloze,
L_fuzzy is cross-entropy of the rule-induced ternary posterior, and
L_contrast pulls together two dropout views of the same input. Terms with
zero weight are never computed and never appear in the loss trace.

All randomness (shuffling, dropout views, bank init) flows through named
seed streams, so one root seed fixes the whole run.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Iterable, Sequence

import torch

from .backend import ToyBackend, make_toy_backend
from .config import TrainConfig
from .contrast import contrastive_loss
from .corpus import CandidatePair, align_attributes
from .errors import TrainingError
from .fuzzy import EPS, fuzzy_loss, induce_posterior, map_ambiguous_to_binary
from .prompt import (
    PromptRendering,
    SoftPromptBank,
    Verbalizer,
    binary_verbalizer,
    label_scores,
    render_attribute_prompt,
    render_entity_prompt,
    ternary_verbalizer,
    warm_start_vectors,
)
from .seeding import make_generator, seed_stream

MATCH_THRESHOLD = 0.5


@dataclass
class TrainedModel:
    """Backend plus the task-specific trainable pieces and label tables."""

    backend: ToyBackend
    entity_bank: SoftPromptBank | None
    attribute_bank: SoftPromptBank | None
    binary: Verbalizer
    ternary: Verbalizer
    config: TrainConfig

    @property
    def continuous(self) -> bool:
        return self.config.template == "continuous"

    def trainable_parameters(self) -> list[torch.nn.Parameter]:
        params: list[torch.nn.Parameter] = []
        seen: set[int] = set()
        for bank in (self.entity_bank, self.attribute_bank):
            if bank is not None and id(bank) not in seen:
                seen.add(id(bank))
                params.extend(bank.parameters())
        if not self.config.freeze_backbone:
            params.extend(self.backend.parameters())
        return params


def build_model(
    config: TrainConfig,
    backend_seed: int | None = None,
    max_length: int = 256,
) -> TrainedModel:
    """Fresh model: toy backend, soft banks (continuous template only),
    and resolved verbalizers. The backbone is frozen unless configured
    otherwise; banks warm-start from anchor word embeddings."""
    backend = make_toy_backend(
        config.seed if backend_seed is None else backend_seed, max_length
    )
    tok = backend.tokenizer
    entity_bank = attribute_bank = None
    if config.template == "continuous":
        n = 3 * config.soft_tokens_per_slot
        dim = backend.embedding_dim
        warm = warm_start_vectors(backend.embedding_row, tok, n, dim)
        entity_bank = SoftPromptBank(
            n, dim, make_generator(seed_stream(config.seed, "bank:entity")), warm
        )
        attribute_bank = (
            entity_bank
            if config.share_banks
            else SoftPromptBank(
                n, dim, make_generator(seed_stream(config.seed, "bank:attribute")), warm
            )
        )
    backend.requires_grad_(not config.freeze_backbone)
    return TrainedModel(
        backend=backend,
        entity_bank=entity_bank,
        attribute_bank=attribute_bank,
        binary=binary_verbalizer(tok),
        ternary=ternary_verbalizer(tok),
        config=config,
    )


@dataclass(frozen=True)
class PreparedPair:
    """Renderings for one candidate pair, built once and reused."""

    pair: CandidatePair
    entity: PromptRendering
    attributes: tuple[PromptRendering, ...]
    keys: tuple[str, ...]


def prepare_pair(model: TrainedModel, pair: CandidatePair) -> PreparedPair:
    cfg = model.config
    tok = model.backend.tokenizer
    entity = render_entity_prompt(
        pair, cfg.template, tok, cfg.entity_budget, cfg.soft_tokens_per_slot
    )
    attrs, keys = [], []
    for ap in align_attributes(pair):
        attrs.append(
            render_attribute_prompt(
                ap, tok, cfg.fuzzy_budget, model.continuous, cfg.soft_tokens_per_slot
            )
        )
        keys.append(ap.key)
    return PreparedPair(pair, entity, tuple(attrs), tuple(keys))


def _require_labels(pairs: Sequence[CandidatePair], role: str) -> None:
    for i, pair in enumerate(pairs):
        if pair.label is None:
            raise TrainingError(
                f"{role} pair {i} ({pair.left.id!r}, {pair.right.id!r}) has no label"
            )


def _binary_targets(items: Sequence[PreparedPair]) -> torch.Tensor:
    # verbalizer label order is (yes, no): matched pairs point at index 0
    return torch.tensor([0 if it.pair.label == 1 else 1 for it in items])


def _ternary_targets(items: Sequence[PreparedPair]) -> torch.Tensor:
    # matched pairs are Same (0), everything labeled else Different (1);
    # Ambiguous is never a training target
    return torch.tensor([0 if it.pair.label == 1 else 1 for it in items])


def _mask_label_scores(
    model: TrainedModel,
    renderings: Sequence[PromptRendering],
    soft: torch.Tensor | None,
    verbalizer: Verbalizer,
) -> torch.Tensor:
    _, logits = model.backend.forward_batch(renderings, soft)
    return label_scores(torch.softmax(logits, dim=-1), verbalizer)


def _entity_loss(
    model: TrainedModel, items: Sequence[PreparedPair], soft: torch.Tensor | None
) -> torch.Tensor:
    scores = _mask_label_scores(model, [it.entity for it in items], soft, model.binary)
    picked = scores.gather(-1, _binary_targets(items).unsqueeze(-1)).squeeze(-1)
    return -torch.log(picked.clamp_min(EPS)).mean()


def _batch_posteriors(
    model: TrainedModel, items: Sequence[PreparedPair], soft: torch.Tensor | None
) -> torch.Tensor:
    flat = [r for it in items for r in it.attributes]
    beliefs = _mask_label_scores(model, flat, soft, model.ternary)
    posteriors, offset = [], 0
    for it in items:
        k = len(it.attributes)
        posteriors.append(
            induce_posterior(beliefs[offset : offset + k], model.config.tau)
        )
        offset += k
    return torch.stack(posteriors)


def _fuzzy_loss(
    model: TrainedModel, items: Sequence[PreparedPair], soft: torch.Tensor | None
) -> torch.Tensor:
    posteriors = _batch_posteriors(model, items, soft)
    return fuzzy_loss(posteriors, _ternary_targets(items)).mean()


def _contrast_loss(
    model: TrainedModel,
    items: Sequence[PreparedPair],
    soft: torch.Tensor | None,
    epoch: int,
    batch_index: int,
) -> torch.Tensor:
    cfg = model.config
    renderings = [it.entity for it in items]
    views = []
    for v in range(2):
        seed = seed_stream(cfg.seed, f"dropout:{epoch}:{batch_index}:{v}")
        hidden, _ = model.backend.forward_batch(
            renderings,
            soft,
            dropout_spec=(cfg.contrast_ratio, seed),
            dropout_scope=cfg.dropout_scope,
        )
        views.append(hidden)
    return contrastive_loss(views[0], views[1]).mean()


@dataclass
class TrainResult:
    model: TrainedModel
    trace: list[dict]
    epochs_run: int
    best_valid_f1: float | None


def _chunks(seq: Sequence, size: int) -> Iterable[Sequence]:
    for start in range(0, len(seq), size):
        yield seq[start : start + size]


def train(
    model: TrainedModel,
    train_pairs: Sequence[CandidatePair],
    valid_pairs: Sequence[CandidatePair] | None = None,
) -> TrainResult:
    """Optimize the model in place; returns the per-epoch loss trace.

    Adam over the soft banks (plus the backbone when unfrozen), gradient
    norm clipping, deterministic per-epoch shuffling. Validation F1 is
    recorded each epoch when a validation set is given, and early stopping
    on it kicks in when patience is positive. A non-finite loss aborts
    with the failing epoch named.
    """
    cfg = model.config
    _require_labels(train_pairs, "training")
    if not train_pairs:
        raise TrainingError("training set is empty")
    if valid_pairs is not None:
        _require_labels(valid_pairs, "validation")

    items = [prepare_pair(model, p) for p in train_pairs]
    valid_items = (
        [prepare_pair(model, p) for p in valid_pairs] if valid_pairs else None
    )

    params = model.trainable_parameters()
    if not params:
        raise TrainingError(
            "nothing to train: backbone frozen and no soft banks "
            "(discrete template); unfreeze the backbone or use the "
            "continuous template"
        )
    opt = torch.optim.Adam(params, lr=cfg.learning_rate)

    use_fuzzy = cfg.alpha > 0
    use_contrast = (
        cfg.contrastive_enabled and cfg.contrast_weight > 0 and cfg.contrast_ratio > 0
    )

    trace: list[dict] = []
    best_f1: float | None = None
    best_epoch = -1
    epochs_run = 0
    for epoch in range(cfg.epochs):
        order = list(range(len(items)))
        random.Random(seed_stream(cfg.seed, f"shuffle:{epoch}")).shuffle(order)
        sums = {"total": 0.0, "entity": 0.0, "fuzzy": 0.0, "contrast": 0.0}
        for batch_index, idx_chunk in enumerate(_chunks(order, cfg.batch_size)):
            batch = [items[i] for i in idx_chunk]
            opt.zero_grad()
            soft_entity = model.entity_bank() if model.entity_bank is not None else None
            loss_entity = _entity_loss(model, batch, soft_entity)
            total = loss_entity
            if use_fuzzy:
                if model.attribute_bank is None:
                    soft_attr = None
                elif model.attribute_bank is model.entity_bank:
                    soft_attr = soft_entity
                else:
                    soft_attr = model.attribute_bank()
                loss_fuzzy = _fuzzy_loss(model, batch, soft_attr)
                total = total + cfg.alpha * loss_fuzzy
            if use_contrast:
                loss_contrast = _contrast_loss(
                    model, batch, soft_entity, epoch, batch_index
                )
                total = total + cfg.contrast_weight * loss_contrast
            if not torch.isfinite(total):
                raise TrainingError(
                    f"training diverged: non-finite loss at epoch {epoch}"
                )
            total.backward()
            torch.nn.utils.clip_grad_norm_(params, cfg.grad_clip)
            opt.step()

            n = len(batch)
            sums["total"] += float(total.detach()) * n
            sums["entity"] += float(loss_entity.detach()) * n
            if use_fuzzy:
                sums["fuzzy"] += float(loss_fuzzy.detach()) * n
            if use_contrast:
                sums["contrast"] += float(loss_contrast.detach()) * n

        n_items = len(items)
        entry: dict = {
            "epoch": epoch,
            "loss_total": sums["total"] / n_items,
            "loss_entity": sums["entity"] / n_items,
        }
        if use_fuzzy:
            entry["loss_fuzzy"] = sums["fuzzy"] / n_items
        if use_contrast:
            entry["loss_contrast"] = sums["contrast"] / n_items
        if valid_items is not None:
            records = predict_prepared(model, valid_items)
            report = evaluate_records(records, [it.pair for it in valid_items])
            entry["valid_f1"] = report.f1
        trace.append(entry)
        epochs_run = epoch + 1

        if valid_items is not None and cfg.patience > 0:
            f1 = entry["valid_f1"]
            if best_f1 is None or f1 > best_f1:
                best_f1, best_epoch = f1, epoch
            elif epoch - best_epoch >= cfg.patience:
                break
        elif valid_items is not None:
            f1 = entry["valid_f1"]
            if best_f1 is None or f1 > best_f1:
                best_f1 = f1

    return TrainResult(model, trace, epochs_run, best_f1)


@dataclass(frozen=True)
class PredictionRecord:
    """Everything the fused decision used, per candidate pair."""

    left_id: str
    right_id: str
    match_score: float
    label: int
    entity_prob: float
    fuzzy_prob: float
    posterior: tuple[float, float, float]
    beliefs: tuple[tuple[str, tuple[float, float, float]], ...]


@torch.no_grad()
def predict_prepared(
    model: TrainedModel, items: Sequence[PreparedPair]
) -> list[PredictionRecord]:
    """Score prepared pairs; dropout never applies at prediction time.

    The final match score averages the entity head's match probability and
    the induced posterior collapsed to binary under the configured
    ambiguity policy; ties at the threshold go to the positive class.
    """
    cfg = model.config
    out: list[PredictionRecord] = []
    for chunk in _chunks(list(items), cfg.batch_size):
        soft_entity = model.entity_bank() if model.entity_bank is not None else None
        if model.attribute_bank is None:
            soft_attr = None
        elif model.attribute_bank is model.entity_bank:
            soft_attr = soft_entity
        else:
            soft_attr = model.attribute_bank()

        entity_scores = _mask_label_scores(
            model, [it.entity for it in chunk], soft_entity, model.binary
        )
        yes = entity_scores[:, 0]

        flat = [r for it in chunk for r in it.attributes]
        beliefs = _mask_label_scores(model, flat, soft_attr, model.ternary)

        offset = 0
        for i, it in enumerate(chunk):
            k = len(it.attributes)
            pair_beliefs = beliefs[offset : offset + k]
            offset += k
            posterior = induce_posterior(pair_beliefs, cfg.tau)
            fuzzy_prob = float(
                map_ambiguous_to_binary(posterior, cfg.ambiguous_policy)
            )
            entity_prob = float(yes[i])
            score = (entity_prob + fuzzy_prob) / 2.0
            out.append(
                PredictionRecord(
                    left_id=it.pair.left.id,
                    right_id=it.pair.right.id,
                    match_score=score,
                    label=1 if score >= MATCH_THRESHOLD else 0,
                    entity_prob=entity_prob,
                    fuzzy_prob=fuzzy_prob,
                    posterior=tuple(float(x) for x in posterior),
                    beliefs=tuple(
                        (key, tuple(float(x) for x in row))
                        for key, row in zip(it.keys, pair_beliefs)
                    ),
                )
            )
    return out


def predict_pairs(
    model: TrainedModel, pairs: Sequence[CandidatePair]
) -> list[PredictionRecord]:
    return predict_prepared(model, [prepare_pair(model, p) for p in pairs])


def predict_pair(model: TrainedModel, pair: CandidatePair) -> PredictionRecord:
    return predict_pairs(model, [pair])[0]


@dataclass(frozen=True)
class MetricsReport:
    n: int
    tp: int
    fp: int
    fn: int
    tn: int
    precision: float
    recall: float
    f1: float
    accuracy: float
    average_precision: float


def average_precision(scores: Sequence[float], gold: Sequence[int]) -> float:
    """Mean precision at the ranks of gold positives, scores descending.

    The sort is stable, so tied scores keep input order. No gold positives
    gives 0 by convention.
    """
    order = sorted(range(len(scores)), key=lambda i: -scores[i])
    hits = 0
    precisions = []
    for rank, i in enumerate(order, start=1):
        if gold[i] == 1:
            hits += 1
            precisions.append(hits / rank)
    return sum(precisions) / len(precisions) if precisions else 0.0


def evaluate(
    scores: Sequence[float],
    predicted: Sequence[int],
    gold: Sequence[int],
) -> MetricsReport:
    """Binary classification metrics with explicit zero conventions.

    Precision, recall, and F1 are 0 whenever their denominators are 0.
    Every gold label must be 0 or 1; unlabeled pairs cannot be scored.
    """
    if not (len(scores) == len(predicted) == len(gold)):
        raise ValueError(
            f"length mismatch: {len(scores)} scores, {len(predicted)} predictions, "
            f"{len(gold)} gold labels"
        )
    if not scores:
        raise ValueError("cannot evaluate an empty prediction set")
    for g in gold:
        if g not in (0, 1):
            raise ValueError(f"gold labels must be 0 or 1, got {g!r}")

    tp = sum(1 for p, g in zip(predicted, gold) if p == 1 and g == 1)
    fp = sum(1 for p, g in zip(predicted, gold) if p == 1 and g == 0)
    fn = sum(1 for p, g in zip(predicted, gold) if p == 0 and g == 1)
    tn = sum(1 for p, g in zip(predicted, gold) if p == 0 and g == 0)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    accuracy = (tp + tn) / len(gold)
    return MetricsReport(
        n=len(gold),
        tp=tp,
        fp=fp,
        fn=fn,
        tn=tn,
        precision=precision,
        recall=recall,
        f1=f1,
        accuracy=accuracy,
        average_precision=average_precision(scores, gold),
    )


def evaluate_records(
    records: Sequence[PredictionRecord], pairs: Sequence[CandidatePair]
) -> MetricsReport:
    if len(records) != len(pairs):
        raise ValueError(
            f"{len(records)} prediction records for {len(pairs)} pairs"
        )
    for i, pair in enumerate(pairs):
        if pair.label is None:
            raise TrainingError(
                f"evaluation pair {i} ({pair.left.id!r}, {pair.right.id!r}) "
                "has no label"
            )
    return evaluate(
        [r.match_score for r in records],
        [r.label for r in records],
        [p.label for p in pairs],
    )
