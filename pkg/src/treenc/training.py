"""Deterministic training loop with snapshot retention and vote ensembling.

One optimizer update per batch of trees; the learning rate follows a linear
warmup/decay schedule fixed from the epoch budget. After every epoch the
validation F1 decides early stopping and which parameter snapshots to keep.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field, asdict

import numpy as np
import torch

from .errors import ConfigError, EmptySplitError, NonFiniteError
from .evaluation import prf1
from .model import (
    EncodedTree,
    bce_loss,
    predict_labels,
    tensor_from_json,
    tensor_to_json,
)


@dataclass
class TrainConfig:
    peak_lr: float = 1e-4
    warmup_ratio: float = 0.1
    batch_size: int = 8
    max_epochs: int = 100
    patience: int = 10
    seed: int = 42
    snapshots_kept: int = 5
    weight_decay: float = 0.01
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8

    def __post_init__(self):
        if not 0.0 <= self.warmup_ratio <= 1.0:
            raise ConfigError("warmup_ratio must be in [0, 1]")
        if self.snapshots_kept < 1:
            raise ConfigError("snapshots_kept must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.max_epochs < 1:
            raise ConfigError("max_epochs must be >= 1")
        if self.patience < 0:
            raise ConfigError("patience must be >= 0")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["betas"] = list(self.betas)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown train config fields: {sorted(unknown)}")
        if "betas" in d:
            d = dict(d, betas=tuple(d["betas"]))
        return cls(**d)


def lr_at(step: int, total_steps: int, cfg: TrainConfig) -> float:
    """Piecewise-linear schedule: 0 to peak over the warmup steps, then peak
    back to 0 at ``total_steps``."""
    if total_steps <= 0:
        return 0.0
    warmup = math.ceil(cfg.warmup_ratio * total_steps)
    if step < warmup:
        return cfg.peak_lr * step / warmup
    if step >= total_steps or total_steps == warmup:
        return 0.0
    return cfg.peak_lr * (total_steps - step) / (total_steps - warmup)


@dataclass(eq=False)
class Snapshot:
    state: dict
    val_f1: float
    step: int


@dataclass
class SnapshotSet:
    capacity: int = 5
    entries: list = field(default_factory=list)

    def offer(self, state: dict, val_f1: float, step: int) -> bool:
        """Insert and keep the best ``capacity`` snapshots, ordered by F1
        descending with earlier steps winning ties. Returns True if kept."""
        snap = Snapshot(state=state, val_f1=val_f1, step=step)
        self.entries.append(snap)
        self.entries.sort(key=lambda s: (-s.val_f1, s.step))
        self.entries = self.entries[: self.capacity]
        return snap in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def best(self) -> Snapshot:
        return self.entries[0]


def _clone_state(model: torch.nn.Module) -> dict:
    return {k: v.detach().clone() for k, v in model.state_dict().items()}


def evaluate_model(model, encoded_trees, threshold: float = 0.5):
    """Per-tree predicted labels and probabilities with the model in eval mode."""
    was_training = model.training
    model.eval()
    labels_out, probs_out = [], []
    with torch.no_grad():
        for et in encoded_trees:
            trace = model(et)
            labels_out.append(predict_labels(trace.probs, threshold))
            probs_out.append(trace.probs.detach().cpu().numpy())
    if was_training:
        model.train()
    return labels_out, probs_out


def _pooled_f1(model, encoded_trees) -> float:
    preds, _ = evaluate_model(model, encoded_trees)
    gold = np.concatenate([et.labels.numpy() for et in encoded_trees])
    flat = np.concatenate(preds)
    return prf1(flat, gold).f1


def _encode_nested(obj):
    """JSON-encode a nested container that may hold tensors."""
    if isinstance(obj, torch.Tensor):
        return {"__tensor__": tensor_to_json(obj)}
    if isinstance(obj, dict):
        return {str(k): _encode_nested(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_encode_nested(v) for v in obj]
    return obj


def _decode_nested(obj):
    if isinstance(obj, dict):
        if set(obj) == {"__tensor__"}:
            return tensor_from_json(obj["__tensor__"])
        return {k: _decode_nested(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_decode_nested(v) for v in obj]
    return obj


def capture_training_state(model, optimizer, shuffler, snapshots, history,
                           epoch, global_step, best_f1, since) -> dict:
    """JSON-serializable snapshot of the whole training loop."""
    return {
        "epoch": epoch,
        "global_step": global_step,
        "best_f1": best_f1,
        "since": since,
        "model": {k: tensor_to_json(v) for k, v in model.state_dict().items()},
        "optimizer": _encode_nested(optimizer.state_dict()),
        "torch_rng": tensor_to_json(torch.get_rng_state()),
        "shuffler": _encode_nested(list(shuffler.getstate())),
        "snapshots": [
            {"state": {k: tensor_to_json(v) for k, v in s.state.items()},
             "val_f1": s.val_f1, "step": s.step}
            for s in snapshots.entries
        ],
        "history": list(history),
    }


def _restore_optimizer_state(encoded: dict) -> dict:
    decoded = _decode_nested(encoded)
    decoded["state"] = {int(k): v for k, v in decoded["state"].items()}
    return decoded


def train_model(model, train_trees: list[EncodedTree], val_trees: list[EncodedTree],
                cfg: TrainConfig, resume_state: dict | None = None,
                state_sink=None):
    """Train in place; returns (SnapshotSet, history).

    History holds one record per epoch:
    {epoch, step, lr, train_loss, val_f1, snapshot_saved}. Fully
    deterministic for a fixed seed in single-threaded use. ``state_sink``
    receives a full loop snapshot after every epoch; feeding one back as
    ``resume_state`` continues the run exactly where it stopped.
    """
    if not train_trees:
        raise EmptySplitError("no training trees")
    if not val_trees:
        raise EmptySplitError("no validation trees")

    torch.manual_seed(cfg.seed)
    shuffler = random.Random(cfg.seed)

    optimizer = torch.optim.AdamW(
        model.parameters(), lr=0.0, betas=cfg.betas, eps=cfg.eps,
        weight_decay=cfg.weight_decay,
    )
    batches_per_epoch = math.ceil(len(train_trees) / cfg.batch_size)
    total_steps = cfg.max_epochs * batches_per_epoch

    snapshots = SnapshotSet(capacity=cfg.snapshots_kept)
    history: list[dict] = []
    best_f1 = float("-inf")
    epochs_since_improvement = 0
    global_step = 0
    start_epoch = 1

    if resume_state is not None:
        model.load_state_dict(
            {k: tensor_from_json(v) for k, v in resume_state["model"].items()}
        )
        optimizer.load_state_dict(
            _restore_optimizer_state(resume_state["optimizer"])
        )
        torch.set_rng_state(tensor_from_json(resume_state["torch_rng"]))
        version, internal, gauss = _decode_nested(resume_state["shuffler"])
        shuffler.setstate((version, tuple(internal), gauss))
        for entry in resume_state["snapshots"]:
            snapshots.offer(
                {k: tensor_from_json(v) for k, v in entry["state"].items()},
                entry["val_f1"], entry["step"],
            )
        history = list(resume_state["history"])
        best_f1 = resume_state["best_f1"]
        epochs_since_improvement = resume_state["since"]
        global_step = resume_state["global_step"]
        start_epoch = resume_state["epoch"] + 1
        if epochs_since_improvement >= cfg.patience:
            return snapshots, history

    for epoch in range(start_epoch, cfg.max_epochs + 1):
        model.train()
        order = list(range(len(train_trees)))
        shuffler.shuffle(order)
        epoch_losses = []
        lr = 0.0
        for start in range(0, len(order), cfg.batch_size):
            batch = [train_trees[i] for i in order[start:start + cfg.batch_size]]
            lr = lr_at(global_step, total_steps, cfg)
            for group in optimizer.param_groups:
                group["lr"] = lr
            optimizer.zero_grad()
            total = torch.zeros((), dtype=model.dtype)
            n_labeled = 0
            for et in batch:
                loss, n = bce_loss(model(et).logits, et.labels)
                total = total + loss
                n_labeled += n
            batch_loss = total / max(1, n_labeled)
            if not torch.isfinite(batch_loss):
                raise NonFiniteError(
                    f"non-finite loss at epoch {epoch}, step {global_step}"
                )
            batch_loss.backward()
            optimizer.step()
            global_step += 1
            epoch_losses.append(float(batch_loss.detach()))

        val_f1 = _pooled_f1(model, val_trees)
        saved = snapshots.offer(_clone_state(model), val_f1, global_step)
        history.append({
            "epoch": epoch,
            "step": global_step,
            "lr": lr,
            "train_loss": sum(epoch_losses) / len(epoch_losses),
            "val_f1": val_f1,
            "snapshot_saved": saved,
        })
        if val_f1 > best_f1:
            best_f1 = val_f1
            epochs_since_improvement = 0
        else:
            epochs_since_improvement += 1
        if state_sink is not None:
            state_sink(capture_training_state(
                model, optimizer, shuffler, snapshots, history,
                epoch, global_step, best_f1, epochs_since_improvement,
            ))
        if epochs_since_improvement >= cfg.patience:
            break

    return snapshots, history


def predict_ensemble(model, snapshots: SnapshotSet, et: EncodedTree,
                     threshold: float = 0.5):
    """Majority-vote labels over the retained snapshots.

    A node is positive iff strictly more than half of the snapshots vote 1,
    so even-count ties go to 0. Also returns the mean probability per node.
    The model's weights are restored afterwards.
    """
    if len(snapshots) == 0:
        raise ValueError("need at least one snapshot")
    original = _clone_state(model)
    votes = np.zeros(et.n_nodes, dtype=np.int64)
    prob_sum = np.zeros(et.n_nodes, dtype=np.float64)
    try:
        for snap in snapshots.entries:
            model.load_state_dict(snap.state)
            labels, probs = evaluate_model(model, [et], threshold)
            votes += labels[0]
            prob_sum += probs[0]
    finally:
        model.load_state_dict(original)
    labels = (votes * 2 > len(snapshots)).astype(np.int64)
    return labels, prob_sum / len(snapshots)
