"""Estimator-style wrappers so the classifiers compose with the scikit-learn
ecosystem: constructor parameters mirror the model/train configs, ``fit``
takes a list of labeled DomTrees, ``predict`` returns one label array per
tree.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .baselines import MlpModel, heuristic_classify, similarity_classify
from .dom import DomTree, validate_tree
from .embeddings import HashEmbeddingProvider
from .errors import EmptySplitError, FormatError
from .evaluation import prf1, split_by_interest
from .model import ModelConfig, TreeEncoderModel, encode_tree, init_parameters
from .training import TrainConfig, predict_ensemble, train_model


def validate_trees(X) -> list[DomTree]:
    """Input-validation helper: X must be a non-empty list of valid DomTrees."""
    if not isinstance(X, (list, tuple)) or len(X) == 0:
        raise ValueError("X must be a non-empty list of DomTree")
    for i, tree in enumerate(X):
        if not isinstance(tree, DomTree):
            raise TypeError(f"X[{i}] is {type(tree).__name__}, expected DomTree")
        try:
            validate_tree(tree)
        except FormatError as exc:
            raise ValueError(f"X[{i}]: {exc}") from exc
    return list(X)


def require_labels(trees: list[DomTree]) -> None:
    if not any(n.label is not None for t in trees for n in t.nodes):
        raise ValueError("fit requires labeled nodes")


def _carve_validation(trees: list[DomTree], seed: int):
    """Hold out roughly 10 percent of interests for early stopping."""
    interests = sorted({t.interest for t in trees})
    if len(interests) < 2:
        raise EmptySplitError(
            "need a second interest (or explicit val_trees) for validation"
        )
    if len(interests) >= 3:
        spec = split_by_interest(trees, seed=seed, ratios=(0.9, 0.1, 0.0),
                                 replicates=1)
        train = spec.partition(trees, 1, "train")
        val = spec.partition(trees, 1, "val")
        if train and val:
            return train, val
    held = interests[-1]
    return ([t for t in trees if t.interest != held],
            [t for t in trees if t.interest == held])


class _TorchNodeClassifier(BaseEstimator):
    """Shared fit/predict machinery for the torch-backed estimators."""

    def _model_config(self) -> ModelConfig:
        fields = ModelConfig.__dataclass_fields__
        return ModelConfig(**{k: getattr(self, k) for k in fields})

    def _train_config(self) -> TrainConfig:
        fields = TrainConfig.__dataclass_fields__
        return TrainConfig(**{k: getattr(self, k) for k in fields
                              if hasattr(self, k)})

    def _get_provider(self):
        return self.provider or HashEmbeddingProvider(dim=self.d_embed, seed=0)

    def _build_model(self, cfg: ModelConfig):
        raise NotImplementedError

    def fit(self, X, y=None, val_trees=None):
        trees = validate_trees(X)
        require_labels(trees)
        if val_trees is None:
            trees, val_trees = _carve_validation(trees, self.seed)
        else:
            val_trees = validate_trees(val_trees)
        provider = self._get_provider()
        cfg = self._model_config()
        train_enc = [encode_tree(t, provider) for t in trees]
        val_enc = [encode_tree(t, provider) for t in val_trees]
        self.model_ = self._build_model(cfg)
        init_parameters(self.model_, self.seed)
        self.config_ = cfg
        self.train_config_ = self._train_config()
        self.snapshots_, self.history_ = train_model(
            self.model_, train_enc, val_enc, self.train_config_
        )
        return self

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise RuntimeError("estimator is not fitted")

    def predict(self, X) -> list[np.ndarray]:
        """Majority-vote labels over retained snapshots, one array per tree."""
        self._check_fitted()
        provider = self._get_provider()
        out = []
        for tree in validate_trees(X):
            labels, _ = predict_ensemble(
                self.model_, self.snapshots_, encode_tree(tree, provider)
            )
            out.append(labels)
        return out

    def predict_proba(self, X) -> list[np.ndarray]:
        """Mean positive-class probability across snapshots per node."""
        self._check_fitted()
        provider = self._get_provider()
        out = []
        for tree in validate_trees(X):
            _, probs = predict_ensemble(
                self.model_, self.snapshots_, encode_tree(tree, provider)
            )
            out.append(probs)
        return out

    def score(self, X, y=None) -> float:
        """Pooled positive-class F1 against the gold labels carried by X."""
        trees = validate_trees(X)
        preds = np.concatenate(self.predict(trees))
        gold = np.concatenate(
            [[-1 if n.label is None else n.label for n in t.nodes] for t in trees]
        )
        return prf1(preds, gold).f1


class TreeTransformerClassifier(_TorchNodeClassifier):
    """Dual-branch tree-transformer node classifier with vote ensembling."""

    def __init__(self, d_model=128, n_layers=12, n_heads=4, d_k=32,
                 ffn_dim=512, cls_hidden=16, d_embed=768, dropout=0.1,
                 use_interest=True, use_tag=True, use_text=True,
                 use_gating=True, use_path_attn=True, use_sibling_attn=True,
                 use_level_sibling_pos=True, plain_transformer=False,
                 peak_lr=1e-4, warmup_ratio=0.1, batch_size=8, max_epochs=100,
                 patience=10, seed=42, snapshots_kept=5, weight_decay=0.01,
                 provider=None):
        self.d_model = d_model
        self.n_layers = n_layers
        self.n_heads = n_heads
        self.d_k = d_k
        self.ffn_dim = ffn_dim
        self.cls_hidden = cls_hidden
        self.d_embed = d_embed
        self.dropout = dropout
        self.use_interest = use_interest
        self.use_tag = use_tag
        self.use_text = use_text
        self.use_gating = use_gating
        self.use_path_attn = use_path_attn
        self.use_sibling_attn = use_sibling_attn
        self.use_level_sibling_pos = use_level_sibling_pos
        self.plain_transformer = plain_transformer
        self.peak_lr = peak_lr
        self.warmup_ratio = warmup_ratio
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.seed = seed
        self.snapshots_kept = snapshots_kept
        self.weight_decay = weight_decay
        self.provider = provider

    def _build_model(self, cfg):
        return TreeEncoderModel(cfg)


class MlpNodeClassifier(_TorchNodeClassifier):
    """Node-independent MLP over the same integrated node features."""

    def __init__(self, d_model=128, n_heads=4, d_k=32, cls_hidden=16,
                 d_embed=768, dropout=0.0, hidden_layers=3, peak_lr=1e-4,
                 warmup_ratio=0.1, batch_size=8, max_epochs=100, patience=10,
                 seed=42, snapshots_kept=5, weight_decay=0.01, provider=None):
        self.d_model = d_model
        self.n_heads = n_heads
        self.d_k = d_k
        self.cls_hidden = cls_hidden
        self.d_embed = d_embed
        self.dropout = dropout
        self.hidden_layers = hidden_layers
        self.peak_lr = peak_lr
        self.warmup_ratio = warmup_ratio
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.seed = seed
        self.snapshots_kept = snapshots_kept
        self.weight_decay = weight_decay
        self.provider = provider

    def _model_config(self):
        return ModelConfig(d_model=self.d_model, n_layers=1,
                           n_heads=self.n_heads, d_k=self.d_k,
                           cls_hidden=self.cls_hidden, d_embed=self.d_embed,
                           dropout=self.dropout)

    def _build_model(self, cfg):
        return MlpModel(cfg, hidden_layers=self.hidden_layers)


class HeuristicNodeClassifier(BaseEstimator):
    """Stateless rule-based classifier; fit is a no-op."""

    def fit(self, X, y=None):
        validate_trees(X)
        return self

    def predict(self, X) -> list[np.ndarray]:
        return [heuristic_classify(t) for t in validate_trees(X)]

    def score(self, X, y=None) -> float:
        trees = validate_trees(X)
        preds = np.concatenate(self.predict(trees))
        gold = np.concatenate(
            [[-1 if n.label is None else n.label for n in t.nodes] for t in trees]
        )
        return prf1(preds, gold).f1


class TextSimilarityClassifier(BaseEstimator):
    """Cosine-similarity baseline with grid-searched threshold."""

    def __init__(self, d_embed=768, provider=None):
        self.d_embed = d_embed
        self.provider = provider

    def _get_provider(self):
        return self.provider or HashEmbeddingProvider(dim=self.d_embed, seed=0)

    def fit(self, X, y=None):
        trees = validate_trees(X)
        require_labels(trees)
        result = similarity_classify([], self._get_provider(), trees)
        self.threshold_ = result.threshold
        self.f1_table_ = result.f1_table
        return self

    def predict(self, X) -> list[np.ndarray]:
        if not hasattr(self, "threshold_"):
            raise RuntimeError("estimator is not fitted")
        from .baselines import _tree_sims

        provider = self._get_provider()
        return [
            (_tree_sims(t, provider) > self.threshold_).astype(np.int64)
            for t in validate_trees(X)
        ]

    def score(self, X, y=None) -> float:
        trees = validate_trees(X)
        preds = np.concatenate(self.predict(trees))
        gold = np.concatenate(
            [[-1 if n.label is None else n.label for n in t.nodes] for t in trees]
        )
        return prf1(preds, gold).f1
