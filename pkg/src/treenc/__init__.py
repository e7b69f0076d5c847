"""treenc: tree-transformer classification of DOM nodes as product types."""

__version__ = "0.1.0"

from .dom import (
    DomNode,
    DomTree,
    load_dataset,
    parse_html,
    save_dataset,
    simplify_tree,
    split_tree,
    validate_tree,
)
from .embeddings import (
    FileEmbeddingProvider,
    HashEmbeddingProvider,
    hash_embed,
    load_embedding_file,
    normalize_key,
    pool_tokens,
    write_embedding_file,
)
from .evaluation import EvalReport, SplitSpec, prf1, split_by_interest
from .indexing import TreeIndex, compute_tree_index
from .model import (
    EncodedTree,
    ModelConfig,
    TreeEncoderModel,
    encode_tree,
    init_parameters,
    load_checkpoint,
    save_checkpoint,
)
from .synthetic import generate_synthetic_corpus
from .training import SnapshotSet, TrainConfig, predict_ensemble, train_model

__all__ = [
    "DomNode",
    "DomTree",
    "EncodedTree",
    "EvalReport",
    "FileEmbeddingProvider",
    "HashEmbeddingProvider",
    "ModelConfig",
    "SnapshotSet",
    "SplitSpec",
    "TrainConfig",
    "TreeEncoderModel",
    "TreeIndex",
    "compute_tree_index",
    "encode_tree",
    "generate_synthetic_corpus",
    "hash_embed",
    "init_parameters",
    "load_checkpoint",
    "load_dataset",
    "normalize_key",
    "parse_html",
    "pool_tokens",
    "predict_ensemble",
    "prf1",
    "save_checkpoint",
    "save_dataset",
    "simplify_tree",
    "split_by_interest",
    "split_tree",
    "train_model",
    "validate_tree",
    "write_embedding_file",
]
