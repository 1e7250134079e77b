"""Classifier-guided semantic embedding optimisation and editing."""

from src.caso.editing import (
    edit,
    edit_single_step,
    edit_success_rate,
    edit_towards,
    edit_verdicts,
    generate_single_step,
    interpolate_scale,
    outside_region_mse,
    reconstruction_mse,
)
from src.caso.embedding import (
    EditConfig,
    SemanticEmbedding,
    concat_embeddings,
    init_embeddings,
    load_embeddings,
    save_embeddings,
)
from src.caso.training import EmbeddingTrainReport, learn_embeddings

__all__ = [
    "EditConfig",
    "EmbeddingTrainReport",
    "SemanticEmbedding",
    "concat_embeddings",
    "edit",
    "edit_single_step",
    "edit_success_rate",
    "edit_towards",
    "edit_verdicts",
    "generate_single_step",
    "init_embeddings",
    "interpolate_scale",
    "learn_embeddings",
    "load_embeddings",
    "outside_region_mse",
    "reconstruction_mse",
    "save_embeddings",
]
