"""Low-resource entity matching with prompted cloze heads.

Candidate pairs are serialized into tagged token streams, wrapped in hard
or continuous (soft-token) templates, and scored by a masked LM through
small verbalizer tables. An attribute-level head feeds a differentiable
rule chain that turns per-attribute beliefs into an entity-level posterior,
and a contrastive term over dropout views of the soft prompts regularizes
the low-data regime.
"""

from .backend import BackendSpec, ToyBackend, ToyTokenizer, make_toy_backend
from .config import RunConfig, TrainConfig, load_run_config
from .contrast import contrastive_loss, dropout_view
from .corpus import (
    AlignedAttributePair,
    Attribute,
    CandidatePair,
    Dataset,
    Entity,
    align_attributes,
    load_entities,
    load_pairs,
    sample_low_resource,
)
from .errors import (
    BackendError,
    BudgetError,
    ConfigError,
    DataFormatError,
    PromptAttribError,
    TrainingError,
    VerbalizerError,
)
from .fuzzy import (
    fuzzy_loss,
    induce,
    induce_posterior,
    map_ambiguous_to_binary,
)
from .prompt import (
    PromptRendering,
    SoftPromptBank,
    Verbalizer,
    binary_verbalizer,
    render_attribute_prompt,
    render_entity_prompt,
    ternary_verbalizer,
    verbalize,
)
from .serialize import parse, serialize
from .train_eval import (
    MetricsReport,
    PredictionRecord,
    TrainedModel,
    TrainResult,
    build_model,
    evaluate,
    predict_pair,
    predict_pairs,
    train,
)

__all__ = [
    "AlignedAttributePair",
    "Attribute",
    "BackendError",
    "BackendSpec",
    "BudgetError",
    "CandidatePair",
    "ConfigError",
    "DataFormatError",
    "Dataset",
    "Entity",
    "MetricsReport",
    "PredictionRecord",
    "PromptAttribError",
    "PromptRendering",
    "RunConfig",
    "SoftPromptBank",
    "ToyBackend",
    "ToyTokenizer",
    "TrainConfig",
    "TrainResult",
    "TrainedModel",
    "TrainingError",
    "Verbalizer",
    "VerbalizerError",
    "align_attributes",
    "binary_verbalizer",
    "build_model",
    "contrastive_loss",
    "dropout_view",
    "evaluate",
    "fuzzy_loss",
    "induce",
    "induce_posterior",
    "load_entities",
    "load_pairs",
    "load_run_config",
    "make_toy_backend",
    "map_ambiguous_to_binary",
    "parse",
    "predict_pair",
    "predict_pairs",
    "render_attribute_prompt",
    "render_entity_prompt",
    "sample_low_resource",
    "serialize",
    "ternary_verbalizer",
    "train",
    "verbalize",
]
