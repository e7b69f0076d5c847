"""Batch-embed every distinct text of a dataset file with a language model.

Reads the newline-delimited JSON dataset format (one tree per line, nodes
with a ``text`` field plus a tree-level ``interest``), runs each distinct
normalized text through the encoder, mean-pools all final-layer token
vectors including the special boundary tokens, and writes the embedding
file format: a header line ``{"version": 1, "dim": ..., "model": ...}``
followed by one ``{"key": ..., "vec": [...]}`` line per text.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np
import torch

logger = logging.getLogger(__name__)

DATASET_VERSION = 1
EMBEDDING_FILE_VERSION = 1
DEFAULT_MODEL = "bert-base-uncased"


class ExportError(Exception):
    """Problems reading inputs or writing the embedding file."""


class ModelLoadError(ExportError):
    """The encoder model or tokenizer could not be loaded."""


@dataclass
class ExportJob:
    dataset: str
    output: str
    model: str = DEFAULT_MODEL
    batch_size: int = 64
    device: str = "cpu"


def normalize_key(text: str) -> str:
    """Lowercase, whitespace-collapsed form; must match the consumer side."""
    return " ".join(text.split()).lower()


def collect_keys(dataset_path) -> list[str]:
    """Distinct normalized texts (nodes plus interests) in first-occurrence
    order."""
    keys: list[str] = []
    seen: set[str] = set()

    def add(text: str) -> None:
        key = normalize_key(text)
        if key not in seen:
            seen.add(key)
            keys.append(key)

    with open(dataset_path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ExportError(f"line {lineno}: invalid JSON: {exc}") from exc
            if doc.get("version") != DATASET_VERSION:
                raise ExportError(
                    f"line {lineno}: unsupported dataset version "
                    f"{doc.get('version')!r}"
                )
            try:
                add(doc["interest"])
                for node in doc["nodes"]:
                    add(node["text"])
            except (KeyError, TypeError) as exc:
                raise ExportError(f"line {lineno}: malformed tree: {exc}") from exc
    return keys


class TextEncoder:
    """Mean-pooled final-layer encoder around a transformers model."""

    def __init__(self, model_id: str, device: str = "cpu"):
        try:
            from transformers import AutoModel, AutoTokenizer

            self.tokenizer = AutoTokenizer.from_pretrained(model_id)
            self.model = AutoModel.from_pretrained(model_id)
        except Exception as exc:
            raise ModelLoadError(f"cannot load model {model_id!r}: {exc}") from exc
        self.model_id = model_id
        self.device = torch.device(device)
        self.model.to(self.device)
        self.model.eval()
        self.dim = int(self.model.config.hidden_size)
        self.max_length = self._resolve_max_length()

    def _resolve_max_length(self) -> int:
        candidates = [getattr(self.tokenizer, "model_max_length", 0)]
        candidates.append(getattr(self.model.config, "max_position_embeddings", 0))
        lengths = [c for c in candidates if 0 < c < 100000]
        return min(lengths) if lengths else 512

    def encode_batch(self, texts: list[str]) -> np.ndarray:
        """(len(texts), dim) pooled vectors; overlong texts are truncated
        with a warning."""
        probe = self.tokenizer(texts, truncation=False, padding=False)
        for text, ids in zip(texts, probe["input_ids"]):
            if len(ids) > self.max_length:
                logger.warning(
                    "text %r tokenizes to %d tokens; truncated to %d",
                    text[:40], len(ids), self.max_length,
                )
        enc = self.tokenizer(
            texts, padding=True, truncation=True, max_length=self.max_length,
            return_tensors="pt",
        ).to(self.device)
        try:
            with torch.no_grad():
                hidden = self.model(**enc).last_hidden_state
        except RuntimeError as exc:
            if "out of memory" in str(exc).lower():
                raise ExportError(
                    "encoder ran out of memory; reduce --batch and retry"
                ) from exc
            raise
        mask = enc["attention_mask"].unsqueeze(-1).to(hidden.dtype)
        pooled = (hidden * mask).sum(dim=1) / mask.sum(dim=1)
        return pooled.cpu().numpy()


def export(job: ExportJob) -> int:
    """Run the export job; returns the number of keys written."""
    if job.batch_size < 1:
        raise ExportError("batch size must be >= 1")
    keys = collect_keys(job.dataset)
    encoder = TextEncoder(job.model, device=job.device)
    with open(job.output, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({
            "version": EMBEDDING_FILE_VERSION,
            "dim": encoder.dim,
            "model": job.model,
        }) + "\n")
        for start in range(0, len(keys), job.batch_size):
            batch = keys[start:start + job.batch_size]
            vectors = encoder.encode_batch(batch)
            for key, vec in zip(batch, vectors):
                floats = [float(np.float32(x)) for x in vec]
                fh.write(json.dumps({"key": key, "vec": floats}) + "\n")
    logger.info("wrote %d keys to %s", len(keys), job.output)
    return len(keys)
