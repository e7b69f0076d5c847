"""Tree-transformer encoder for node classification.

Each encoder layer runs two masked self-attention branches in parallel: one
restricted to ancestor-descendant pairs, one to same-parent siblings. Branch
outputs are blended per node by a learned gate. Node features combine a tag
embedding, a pooled text vector projected into model space, and an interest
vector injected through another gate.
"""

from __future__ import annotations

import base64
import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .dom import DomTree
from .errors import ConfigError, DegenerateRowError, DimensionMismatchError, FormatError
from .indexing import TreeIndex, compute_tree_index

CHECKPOINT_VERSION = 1

# Fixed tag vocabulary; anything else maps to UNK (id 0).
TAG_VOCAB = (
    "a", "abbr", "address", "article", "aside", "b", "blockquote", "body",
    "br", "button", "caption", "cite", "code", "col", "colgroup", "dd",
    "del", "details", "div", "dl", "dt", "em", "fieldset", "figcaption",
    "figure", "footer", "form", "h1", "h2", "h3", "h4", "h5", "h6", "head",
    "header", "hr", "html", "i", "img", "input", "ins", "label", "legend",
    "li", "main", "mark", "menu", "nav", "noscript", "ol", "option", "p",
    "picture", "pre", "q", "s", "section", "select", "small", "span",
    "strong", "sub", "summary", "sup", "table", "tbody", "td", "tfoot",
    "th", "thead", "time", "title", "tr", "u", "ul",
)
_TAG_TO_ID = {tag: i + 1 for i, tag in enumerate(TAG_VOCAB)}
N_TAGS = len(TAG_VOCAB) + 1


def tag_id(tag: str) -> int:
    return _TAG_TO_ID.get(tag, 0)


@dataclass
class ModelConfig:
    d_model: int = 128
    n_layers: int = 12
    n_heads: int = 4
    d_k: int = 32
    ffn_dim: int = 512
    cls_hidden: int = 16
    d_embed: int = 768
    dropout: float = 0.1
    use_interest: bool = True
    use_tag: bool = True
    use_text: bool = True
    use_gating: bool = True
    use_path_attn: bool = True
    use_sibling_attn: bool = True
    use_level_sibling_pos: bool = True
    plain_transformer: bool = False

    def __post_init__(self):
        for name in ("d_model", "n_layers", "n_heads", "d_k", "ffn_dim",
                     "cls_hidden", "d_embed"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must be in [0, 1)")
        if self.n_heads * self.d_k != self.d_model:
            raise ConfigError(
                f"n_heads*d_k must equal d_model "
                f"({self.n_heads}*{self.d_k} != {self.d_model})"
            )
        if not self.plain_transformer and not self.use_path_attn and not self.use_sibling_attn:
            raise ConfigError("at least one attention branch must be enabled")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown model config fields: {sorted(unknown)}")
        return cls(**d)


@dataclass
class EncodedTree:
    """Frozen per-tree model inputs."""

    tree: DomTree
    index: TreeIndex
    tag_ids: torch.Tensor       # (n,) long
    text_pooled: torch.Tensor   # (n, d_embed) float32
    interest_pooled: torch.Tensor  # (d_embed,) float32
    labels: torch.Tensor        # (n,) long, -1 for unlabeled
    path_mask: torch.Tensor     # (n, n) float32 additive
    sibling_mask: torch.Tensor

    @property
    def n_nodes(self) -> int:
        return len(self.tag_ids)


def encode_tree(tree: DomTree, provider, index: TreeIndex | None = None) -> EncodedTree:
    if index is None:
        index = compute_tree_index(tree)
    tag_ids = torch.tensor([tag_id(n.tag) for n in tree.nodes], dtype=torch.long)
    text = np.stack([provider.encode(n.text) for n in tree.nodes]).astype(np.float32)
    interest = np.asarray(provider.encode(tree.interest), dtype=np.float32)
    labels = torch.tensor(
        [-1 if n.label is None else n.label for n in tree.nodes], dtype=torch.long
    )
    return EncodedTree(
        tree=tree,
        index=index,
        tag_ids=tag_ids,
        text_pooled=torch.from_numpy(text),
        interest_pooled=torch.from_numpy(interest),
        labels=labels,
        path_mask=torch.from_numpy(index.path_mask),
        sibling_mask=torch.from_numpy(index.sibling_mask),
    )


def sinusoid_encoding(indices: torch.Tensor, d_model: int,
                      dtype: torch.dtype = torch.float32) -> torch.Tensor:
    """Interleaved sin/cos position vectors; index 0 maps to [0,1,0,1,...]."""
    pos = indices.to(dtype).unsqueeze(1)
    j = torch.arange(0, d_model, 2, dtype=dtype)
    inv_freq = torch.exp(-math.log(10000.0) * j / d_model)
    ang = pos * inv_freq
    out = torch.zeros(len(indices), d_model, dtype=dtype)
    out[:, 0::2] = torch.sin(ang)
    out[:, 1::2] = torch.cos(ang)
    return out


class GateUnit(nn.Module):
    """Elementwise sigmoid gate over an affine blend of two inputs."""

    def __init__(self, dim: int):
        super().__init__()
        self.w1 = nn.Linear(dim, dim, bias=False)
        self.w2 = nn.Linear(dim, dim, bias=False)
        self.bias = nn.Parameter(torch.zeros(dim))

    def forward(self, x1: torch.Tensor, x2: torch.Tensor) -> torch.Tensor:
        if x1.shape[-1] != x2.shape[-1]:
            raise DimensionMismatchError(
                f"gate inputs disagree: {x1.shape} vs {x2.shape}"
            )
        return torch.sigmoid(self.w1(x1) + self.w2(x2) + self.bias)


class MaskedMultiHeadAttention(nn.Module):
    def __init__(self, d_model: int, n_heads: int, d_k: int):
        super().__init__()
        self.n_heads = n_heads
        self.d_k = d_k
        self.q_proj = nn.Linear(d_model, n_heads * d_k, bias=False)
        self.k_proj = nn.Linear(d_model, n_heads * d_k, bias=False)
        self.v_proj = nn.Linear(d_model, n_heads * d_k, bias=False)
        self.out_proj = nn.Linear(n_heads * d_k, d_model)

    def forward(self, h: torch.Tensor, mask: torch.Tensor):
        """Returns (output (n, d_model), attention weights (heads, n, n))."""
        n = h.shape[0]
        if bool(torch.isinf(mask).all(dim=1).any()):
            raise DegenerateRowError("attention mask has a fully masked row")
        q = self.q_proj(h).view(n, self.n_heads, self.d_k).transpose(0, 1)
        k = self.k_proj(h).view(n, self.n_heads, self.d_k).transpose(0, 1)
        v = self.v_proj(h).view(n, self.n_heads, self.d_k).transpose(0, 1)
        scores = q @ k.transpose(1, 2) / math.sqrt(self.d_k) + mask
        attn = torch.softmax(scores, dim=-1)
        ctx = (attn @ v).transpose(0, 1).reshape(n, self.n_heads * self.d_k)
        return self.out_proj(ctx), attn


class AttentionBranch(nn.Module):
    """Masked attention sublayer plus FFN sublayer, post-norm residual style."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.attn = MaskedMultiHeadAttention(cfg.d_model, cfg.n_heads, cfg.d_k)
        self.norm1 = nn.LayerNorm(cfg.d_model)
        self.ffn_in = nn.Linear(cfg.d_model, cfg.ffn_dim)
        self.ffn_out = nn.Linear(cfg.ffn_dim, cfg.d_model)
        self.norm2 = nn.LayerNorm(cfg.d_model)
        self.dropout = nn.Dropout(cfg.dropout)

    def forward(self, x: torch.Tensor, mask: torch.Tensor):
        attn_out, weights = self.attn(x, mask)
        x = self.norm1(x + self.dropout(attn_out))
        ffn = self.ffn_out(torch.relu(self.ffn_in(x)))
        x = self.norm2(x + self.dropout(ffn))
        return x, weights


class EncoderLayer(nn.Module):
    """Dual-branch layer with a gated merge; ablations collapse to one branch."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        if cfg.plain_transformer:
            self.path_branch = AttentionBranch(cfg)
            self.sibling_branch = None
            self.merge_gate = None
        else:
            self.path_branch = AttentionBranch(cfg) if cfg.use_path_attn else None
            self.sibling_branch = AttentionBranch(cfg) if cfg.use_sibling_attn else None
            both = self.path_branch is not None and self.sibling_branch is not None
            self.merge_gate = GateUnit(cfg.d_model) if both else None

    def forward(self, h, pos_level, pos_sibling, path_mask, sibling_mask, zero_mask):
        cfg = self.cfg
        if cfg.plain_transformer:
            out, w = self.path_branch(h, zero_mask)
            return out, (out, w), (None, None)
        path_out = sib_out = None
        path_w = sib_w = None
        if self.path_branch is not None:
            x = h + pos_level if cfg.use_level_sibling_pos else h
            path_out, path_w = self.path_branch(x, path_mask)
        if self.sibling_branch is not None:
            x = h + pos_sibling if cfg.use_level_sibling_pos else h
            sib_out, sib_w = self.sibling_branch(x, sibling_mask)
        if self.merge_gate is not None:
            g = self.merge_gate(path_out, sib_out)
            merged = g * path_out + (1.0 - g) * sib_out
            return merged, (path_out, path_w), (sib_out, sib_w)
        out = path_out if path_out is not None else sib_out
        return out, (path_out, path_w), (sib_out, sib_w)


@dataclass
class ForwardTrace:
    node_embeddings: torch.Tensor
    hidden: list = field(default_factory=list)         # H^(1) .. H^(N+1)
    path_outputs: list = field(default_factory=list)   # per layer, may hold None
    sibling_outputs: list = field(default_factory=list)
    path_attn: list = field(default_factory=list)      # (heads, n, n) per layer
    sibling_attn: list = field(default_factory=list)
    logits: torch.Tensor | None = None
    probs: torch.Tensor | None = None


class NodeFeatureEncoder(nn.Module):
    """Tag + text + interest integration into per-node embeddings."""

    def __init__(self, cfg: ModelConfig, n_tags: int = N_TAGS):
        super().__init__()
        self.cfg = cfg
        self.n_tags = n_tags
        self.tag_embedding = nn.Embedding(n_tags, cfg.d_model)
        self.w_seq = nn.Linear(cfg.d_embed, cfg.d_model, bias=False)
        self.w_interest = nn.Linear(cfg.d_embed, cfg.d_model, bias=False)
        self.feature_gate = GateUnit(cfg.d_model)
        self.w_emb = nn.Linear(2 * cfg.d_model, cfg.d_model, bias=False)

    @property
    def dtype(self) -> torch.dtype:
        return self.w_seq.weight.dtype

    def text_feature(self, pooled: torch.Tensor) -> torch.Tensor:
        """Project a pooled text vector (or batch) into model space."""
        if pooled.shape[-1] != self.cfg.d_embed:
            raise DimensionMismatchError(
                f"pooled dim {pooled.shape[-1]} != d_embed {self.cfg.d_embed}"
            )
        return self.w_seq(F.gelu(pooled.to(self.dtype)))

    def interest_feature(self, pooled: torch.Tensor) -> torch.Tensor:
        if pooled.shape[-1] != self.cfg.d_embed:
            raise DimensionMismatchError(
                f"pooled dim {pooled.shape[-1]} != d_embed {self.cfg.d_embed}"
            )
        return self.w_interest(F.gelu(pooled.to(self.dtype)))

    def integrate_features(self, s: torch.Tensor, c: torch.Tensor | None,
                           t: torch.Tensor) -> torch.Tensor:
        """Blend text, interest, and tag features into node embeddings."""
        cfg = self.cfg
        if cfg.use_interest and c is not None:
            c_rows = c.expand_as(s)
            if cfg.use_gating:
                g = self.feature_gate(c_rows, s)
                s = g * c_rows + s
            else:
                s = c_rows + s
        return self.w_emb(torch.cat([s, t], dim=-1))

    def forward(self, et: EncodedTree) -> torch.Tensor:
        cfg, dt, n = self.cfg, self.dtype, et.n_nodes
        if cfg.use_text:
            s = self.text_feature(et.text_pooled)
        else:
            s = torch.zeros(n, cfg.d_model, dtype=dt)
        c = self.interest_feature(et.interest_pooled) if cfg.use_interest else None
        if cfg.use_tag:
            t = self.tag_embedding(et.tag_ids).to(dt)
        else:
            t = torch.zeros(n, cfg.d_model, dtype=dt)
        return self.integrate_features(s, c, t)


class TreeEncoderModel(nn.Module):
    def __init__(self, cfg: ModelConfig, n_tags: int = N_TAGS):
        super().__init__()
        self.cfg = cfg
        self.n_tags = n_tags
        self.features = NodeFeatureEncoder(cfg, n_tags)
        self.w_global = nn.Linear(cfg.d_model, cfg.d_model, bias=False)
        self.w_level = nn.Linear(cfg.d_model, cfg.d_model, bias=False)
        self.w_sibling = nn.Linear(cfg.d_model, cfg.d_model, bias=False)
        self.layers = nn.ModuleList(EncoderLayer(cfg) for _ in range(cfg.n_layers))
        self.cls_hidden_proj = nn.Linear(cfg.d_model, cfg.cls_hidden)
        self.cls_out = nn.Linear(cfg.cls_hidden, 1)
        self.embed_dropout = nn.Dropout(cfg.dropout)

    @property
    def dtype(self) -> torch.dtype:
        return self.features.dtype

    def text_feature(self, pooled: torch.Tensor) -> torch.Tensor:
        return self.features.text_feature(pooled)

    def interest_feature(self, pooled: torch.Tensor) -> torch.Tensor:
        return self.features.interest_feature(pooled)

    def integrate_features(self, s, c, t) -> torch.Tensor:
        return self.features.integrate_features(s, c, t)

    def encode_positions(self, index: TreeIndex):
        """Affine-transformed sinusoid vectors for the three index kinds."""
        d, dt = self.cfg.d_model, self.dtype
        pos_g = self.w_global(sinusoid_encoding(torch.from_numpy(index.global_idx), d, dt))
        pos_l = self.w_level(sinusoid_encoding(torch.from_numpy(index.level_idx), d, dt))
        pos_s = self.w_sibling(sinusoid_encoding(torch.from_numpy(index.sibling_idx), d, dt))
        return pos_g, pos_l, pos_s

    def classify(self, hidden: torch.Tensor) -> torch.Tensor:
        return self.cls_out(F.gelu(self.cls_hidden_proj(hidden))).squeeze(-1)

    def forward(self, et: EncodedTree) -> ForwardTrace:
        cfg = self.cfg
        dt = self.dtype
        n = et.n_nodes

        e = self.features(et)
        pos_g, pos_l, pos_s = self.encode_positions(et.index)
        h = self.embed_dropout(e + pos_g)

        path_mask = et.path_mask.to(dt)
        sibling_mask = et.sibling_mask.to(dt)
        zero_mask = torch.zeros(n, n, dtype=dt)

        trace = ForwardTrace(node_embeddings=e)
        trace.hidden.append(h)
        for layer in self.layers:
            h, (p_out, p_w), (s_out, s_w) = layer(
                h, pos_l, pos_s, path_mask, sibling_mask, zero_mask
            )
            trace.hidden.append(h)
            trace.path_outputs.append(p_out)
            trace.sibling_outputs.append(s_out)
            trace.path_attn.append(p_w)
            trace.sibling_attn.append(s_w)

        trace.logits = self.classify(h)
        trace.probs = torch.sigmoid(trace.logits)
        return trace


def bce_loss(logits: torch.Tensor, labels: torch.Tensor) -> tuple[torch.Tensor, int]:
    """Summed binary cross-entropy over labeled nodes (label >= 0).

    Returns (loss_sum, n_labeled); loss is 0 when nothing is labeled.
    """
    mask = labels >= 0
    n_labeled = int(mask.sum())
    if n_labeled == 0:
        return torch.zeros((), dtype=logits.dtype), 0
    loss = F.binary_cross_entropy_with_logits(
        logits[mask], labels[mask].to(logits.dtype), reduction="sum"
    )
    return loss, n_labeled


def predict_labels(probs: torch.Tensor, threshold: float = 0.5) -> np.ndarray:
    """Hard labels; strictly greater than the threshold maps to 1."""
    return (probs.detach().cpu().numpy() > threshold).astype(np.int64)


def compute_gradients(model: nn.Module, et: EncodedTree) -> dict[str, torch.Tensor]:
    """Reverse-mode gradients of the summed node loss for every parameter.

    Dropout should be disabled (model.eval()) when the gradients feed a
    finite-difference comparison. Raises NonFiniteError on NaN/Inf.
    """
    from .errors import NonFiniteError

    model.zero_grad(set_to_none=True)
    loss, _ = bce_loss(model(et).logits, et.labels)
    loss.backward()
    grads = {}
    for name, param in model.named_parameters():
        g = param.grad
        grad = torch.zeros_like(param) if g is None else g.detach().clone()
        if not torch.isfinite(grad).all():
            raise NonFiniteError(f"non-finite gradient in {name}")
        grads[name] = grad
    return grads


def init_parameters(model: nn.Module, seed: int) -> None:
    """Deterministic init: truncated normal (std 0.02) for weight matrices,
    zeros for biases, ones for layer-norm scales."""
    gen = torch.Generator().manual_seed(seed)
    for module in model.modules():
        if isinstance(module, nn.Linear):
            nn.init.trunc_normal_(module.weight, std=0.02, a=-0.04, b=0.04,
                                  generator=gen)
            if module.bias is not None:
                nn.init.zeros_(module.bias)
        elif isinstance(module, nn.Embedding):
            nn.init.trunc_normal_(module.weight, std=0.02, a=-0.04, b=0.04,
                                  generator=gen)
        elif isinstance(module, nn.LayerNorm):
            nn.init.ones_(module.weight)
            nn.init.zeros_(module.bias)
        elif isinstance(module, GateUnit):
            nn.init.zeros_(module.bias)


_DTYPE_NAMES = {torch.float32: "float32", torch.float64: "float64"}
_NAME_DTYPES = {"float32": torch.float32, "float64": torch.float64,
                "int64": torch.int64}


def tensor_to_json(t: torch.Tensor) -> dict:
    arr = t.detach().cpu().numpy()
    return {
        "shape": list(arr.shape),
        "dtype": str(arr.dtype),
        "data": base64.b64encode(arr.tobytes()).decode("ascii"),
    }


def tensor_from_json(d: dict) -> torch.Tensor:
    arr = np.frombuffer(base64.b64decode(d["data"]), dtype=np.dtype(d["dtype"]))
    return torch.from_numpy(arr.reshape(d["shape"]).copy())


def save_checkpoint(path, model: TreeEncoderModel, extra: dict | None = None) -> None:
    doc = {
        "version": CHECKPOINT_VERSION,
        "config": model.cfg.to_dict(),
        "n_tags": model.n_tags,
        "tensors": {name: tensor_to_json(p) for name, p in model.state_dict().items()},
    }
    if extra:
        doc["extra"] = extra
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def load_checkpoint(path) -> tuple[TreeEncoderModel, dict]:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("version") != CHECKPOINT_VERSION:
        raise FormatError(f"unknown checkpoint version {doc.get('version')!r}")
    cfg = ModelConfig.from_dict(doc["config"])
    model = TreeEncoderModel(cfg, n_tags=doc.get("n_tags", N_TAGS))
    state = {}
    expected = model.state_dict()
    for name, blob in doc["tensors"].items():
        if name not in expected:
            raise FormatError(f"checkpoint holds unknown tensor {name!r}")
        tensor = tensor_from_json(blob)
        if tuple(tensor.shape) != tuple(expected[name].shape):
            raise FormatError(
                f"tensor {name!r} shape {tuple(tensor.shape)} != "
                f"expected {tuple(expected[name].shape)}"
            )
        state[name] = tensor
    missing = set(expected) - set(state)
    if missing:
        raise FormatError(f"checkpoint missing tensors: {sorted(missing)}")
    model.load_state_dict(state)
    model.eval()
    return model, doc.get("extra", {})
