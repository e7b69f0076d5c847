"""Text vector providers for node texts and interest strings.

A provider maps normalized text to a pooled sequence vector of fixed length.
The hash provider is a deterministic stand-in that needs no model files; the
file provider serves vectors exported offline by a language-model encoder.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, FormatError, KeyMissingError, VersionError

logger = logging.getLogger(__name__)

EMBEDDING_FILE_VERSION = 1


def normalize_key(text: str) -> str:
    """Lowercase and collapse whitespace; the lookup key for any text."""
    return " ".join(text.split()).lower()


def pool_tokens(token_vectors) -> np.ndarray:
    """Arithmetic mean of token vectors (boundary tokens included upstream)."""
    if len(token_vectors) == 0:
        raise ValueError("cannot pool an empty token list")
    dim = len(token_vectors[0])
    for i, vec in enumerate(token_vectors):
        if len(vec) != dim:
            raise DimensionMismatchError(
                f"token {i} has length {len(vec)}, expected {dim}"
            )
    return np.mean(np.asarray(token_vectors, dtype=np.float64), axis=0)


def _seeded_unit_vector(key: bytes, dim: int, seed: int) -> np.ndarray:
    digest = hashlib.blake2b(key, digest_size=8, key=seed.to_bytes(8, "little")).digest()
    rng = np.random.Generator(np.random.PCG64(int.from_bytes(digest, "little")))
    vec = rng.standard_normal(dim)
    return vec / np.linalg.norm(vec)


def hash_embed(text: str, dim: int, seed: int = 0) -> list[np.ndarray]:
    """Token vectors for a text: start boundary, one per lowercased
    whitespace token, end boundary. Each is a seeded unit-norm vector, so
    identical tokens map to identical vectors in any process."""
    if dim < 1:
        raise ValueError("dim must be >= 1")
    vectors = [_seeded_unit_vector(b"b:start", dim, seed)]
    for token in text.lower().split():
        vectors.append(_seeded_unit_vector(b"t:" + token.encode("utf-8"), dim, seed))
    vectors.append(_seeded_unit_vector(b"b:end", dim, seed))
    return vectors


@dataclass(frozen=True)
class HashEmbeddingProvider:
    """Self-contained provider: pooled hash-token vectors."""

    dim: int = 768
    seed: int = 0

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")

    def encode(self, text: str) -> np.ndarray:
        return pool_tokens(hash_embed(normalize_key(text), self.dim, self.seed))


class FileEmbeddingProvider:
    """Provider backed by a key->vector file.

    In strict mode a missing key raises KeyMissingError; in lenient mode it
    falls back to the hash provider and logs a warning.
    """

    def __init__(self, vectors: dict[str, np.ndarray], dim: int, model: str = "",
                 strict: bool = True, fallback_seed: int = 0):
        self.vectors = vectors
        self.dim = dim
        self.model = model
        self.strict = strict
        self._fallback = HashEmbeddingProvider(dim=dim, seed=fallback_seed)

    def encode(self, text: str) -> np.ndarray:
        key = normalize_key(text)
        vec = self.vectors.get(key)
        if vec is not None:
            return vec
        if self.strict:
            raise KeyMissingError(f"no embedding for key {key!r}")
        logger.warning("embedding key %r missing; hash fallback used", key)
        return self._fallback.encode(key)


def load_embedding_file(path, strict: bool = True) -> FileEmbeddingProvider:
    """Load the newline-delimited JSON embedding file format."""
    with open(path, "r", encoding="utf-8") as fh:
        header_line = fh.readline()
        if not header_line.strip():
            raise FormatError("line 1: missing header")
        try:
            header = json.loads(header_line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"line 1: invalid JSON header: {exc}") from exc
        version = header.get("version")
        if version != EMBEDDING_FILE_VERSION:
            raise VersionError(f"line 1: unknown embedding file version {version!r}")
        dim = header.get("dim")
        if not isinstance(dim, int) or dim < 1:
            raise FormatError(f"line 1: bad dim field {dim!r}")
        vectors: dict[str, np.ndarray] = {}
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                key, vec = row["key"], row["vec"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise FormatError(f"line {lineno}: malformed row: {exc}") from exc
            if len(vec) != dim:
                raise DimensionMismatchError(
                    f"line {lineno}: vector length {len(vec)} != declared dim {dim}"
                )
            arr = np.asarray(vec, dtype=np.float32)
            if not np.all(np.isfinite(arr)):
                raise FormatError(f"line {lineno}: non-finite vector entry")
            vectors[key] = arr
    return FileEmbeddingProvider(vectors, dim=dim, model=header.get("model", ""),
                                 strict=strict)


def write_embedding_file(path, vectors: dict[str, np.ndarray], dim: int,
                         model: str = "") -> None:
    """Write the embedding file format; float32 values round-trip exactly."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"version": EMBEDDING_FILE_VERSION, "dim": dim,
                             "model": model}) + "\n")
        for key, vec in vectors.items():
            if len(vec) != dim:
                raise DimensionMismatchError(
                    f"key {key!r}: vector length {len(vec)} != dim {dim}"
                )
            floats = [float(np.float32(x)) for x in vec]
            fh.write(json.dumps({"key": key, "vec": floats}) + "\n")
