"""Reference classifiers: hand-written rules, text similarity, and an MLP."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .dom import DomTree, children_map
from .errors import ZeroNormError
from .evaluation import prf1
from .model import EncodedTree, ModelConfig, N_TAGS, NodeFeatureEncoder

# Tags whose nodes tend to carry short enumerated phrases.
_CANDIDATE_TAGS = frozenset({"li", "h2", "h3", "h4", "b", "strong", "td", "dt"})
_LIST_PARENTS = frozenset({"ul", "ol"})
_MAX_TOKENS = 6


def _candidate(tree: DomTree, children, node) -> bool:
    tag_ok = node.tag in _CANDIDATE_TAGS
    if not tag_ok and node.parent_id is not None:
        tag_ok = (not children[node.id]
                  and tree.nodes[node.parent_id].tag in _LIST_PARENTS)
    if not tag_ok:
        return False
    tokens = node.text.split()
    if not 1 <= len(tokens) <= _MAX_TOKENS:
        return False
    return any(ch.isalpha() for ch in node.text)


def heuristic_classify(tree: DomTree, interest: str | None = None) -> np.ndarray:
    """Rule-based labels: a short textual node with a phrase-bearing tag is
    positive when at least two of its siblings look the same way. Never
    reads gold labels; the interest argument is accepted for interface
    parity and unused."""
    children = children_map(tree)
    flags = np.array(
        [_candidate(tree, children, node) for node in tree.nodes], dtype=bool
    )
    labels = np.zeros(len(tree.nodes), dtype=np.int64)
    for sibs in children:
        if len(sibs) < 3:
            continue
        n_cand = int(flags[sibs].sum())
        for nid in sibs:
            if flags[nid] and n_cand - 1 >= 2:
                labels[nid] = 1
    return labels


@dataclass
class SimilarityResult:
    threshold: float
    f1_table: np.ndarray                      # F1 at thresholds 0.01..0.99
    sims: list = field(default_factory=list)    # per tree, aligned with nodes
    labels: list = field(default_factory=list)

    @property
    def thresholds(self) -> np.ndarray:
        return np.round(np.arange(1, 100) * 0.01, 2)


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ZeroNormError("zero-norm vector in cosine similarity")
    return float(np.dot(a, b) / (na * nb))


def _tree_sims(tree: DomTree, provider) -> np.ndarray:
    c = np.asarray(provider.encode(tree.interest), dtype=np.float64)
    return np.array(
        [_cosine(np.asarray(provider.encode(n.text), dtype=np.float64), c)
         for n in tree.nodes]
    )


def similarity_classify(trees: list[DomTree], provider,
                        reference_trees: list[DomTree]) -> SimilarityResult:
    """Cosine similarity between node text and interest vectors.

    The decision threshold is picked by exhaustive search over
    {0.01, ..., 0.99}, maximizing F1 on the labeled reference trees (ties
    fall to the smallest threshold); ``trees`` are then classified with
    sim > threshold.
    """
    ref_sims = np.concatenate([_tree_sims(t, provider) for t in reference_trees])
    ref_gold = np.concatenate(
        [[-1 if n.label is None else n.label for n in t.nodes] for t in reference_trees]
    )
    thresholds = np.round(np.arange(1, 100) * 0.01, 2)
    table = np.array(
        [prf1((ref_sims > th).astype(np.int64), ref_gold).f1 for th in thresholds]
    )
    best = thresholds[int(np.argmax(table))]  # argmax returns first maximum

    result = SimilarityResult(threshold=float(best), f1_table=table)
    for tree in trees:
        sims = _tree_sims(tree, provider)
        result.sims.append(sims)
        result.labels.append((sims > best).astype(np.int64))
    return result


class MlpModel(nn.Module):
    """Per-node classifier over integrated node features: no message passing,
    just stacked affine+GELU layers into a single logit."""

    def __init__(self, cfg: ModelConfig, hidden_layers: int = 3, n_tags: int = N_TAGS):
        super().__init__()
        self.cfg = cfg
        self.features = NodeFeatureEncoder(cfg, n_tags)
        self.hidden = nn.ModuleList(
            nn.Linear(cfg.d_model, cfg.d_model) for _ in range(hidden_layers)
        )
        self.cls_hidden_proj = nn.Linear(cfg.d_model, cfg.cls_hidden)
        self.cls_out = nn.Linear(cfg.cls_hidden, 1)

    @property
    def dtype(self) -> torch.dtype:
        return self.features.dtype

    def forward(self, et: EncodedTree):
        h = self.features(et)
        for layer in self.hidden:
            h = F.gelu(layer(h))
        logits = self.cls_out(F.gelu(self.cls_hidden_proj(h))).squeeze(-1)
        return _MlpTrace(logits=logits, probs=torch.sigmoid(logits))


@dataclass
class _MlpTrace:
    logits: torch.Tensor
    probs: torch.Tensor
