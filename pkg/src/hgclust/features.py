"""Initial node features: structural embedding ++ text embedding.

Text vectors are an input artifact (JSON Lines, one {"code", "vector"}
per line), typically exported from a frozen clinical language model.
Codes missing from the file fall back to deterministic feature hashing
of character 3-grams of the code's description, so the pipeline runs
without any pretrained encoder present.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError

log = logging.getLogger(__name__)


@dataclass
class EmbeddingTable:
    vocabulary: list[str]
    vectors: np.ndarray          # one row per vocabulary entry
    source: str                  # "structural" | "textual"

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])


@dataclass
class FeatureTable:
    vocabulary: list[str]
    matrix: np.ndarray           # (|V|, d_structural + d_text)
    d_structural: int
    d_text: int


def hashed_fallback(code: str, description: str, d_t: int) -> np.ndarray:
    """Deterministic unit vector from hashed character 3-grams.

    Hashing uses blake2b (stable across processes, unlike built-in hash).
    The low bytes pick a bucket, one more bit picks the sign.
    """
    if d_t < 1:
        raise DataError("hashed_fallback: d_t must be >= 1")
    text = description if description else code
    grams = [text[i:i + 3] for i in range(len(text) - 2)] or [text]
    vec = np.zeros(d_t, dtype=np.float64)
    for gram in grams:
        digest = hashlib.blake2b(gram.encode("utf-8"), digest_size=8).digest()
        h = int.from_bytes(digest, "little")
        bucket = (h >> 1) % d_t
        sign = 1.0 if h & 1 else -1.0
        vec[bucket] += sign
    norm = np.linalg.norm(vec)
    if norm < 1e-300:
        # All grams cancelled; pin a single stable coordinate instead.
        digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
        vec[int.from_bytes(digest, "little") % d_t] = 1.0
        norm = 1.0
    return vec / norm


def read_vector_file(path: str | Path) -> tuple[dict[str, np.ndarray], int]:
    """Parse a JSONL vector file; returns (code -> vector, dimension)."""
    vectors: dict[str, np.ndarray] = {}
    dim: int | None = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                code = str(obj["code"])
                vec = np.asarray(obj["vector"], dtype=np.float64)
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise DataError(f"{path}:{lineno}: malformed vector line ({exc})")
            if vec.ndim != 1:
                raise DataError(f"{path}:{lineno}: vector must be a flat list")
            if dim is None:
                dim = len(vec)
            elif len(vec) != dim:
                raise DataError(
                    f"{path}:{lineno}: vector dimension {len(vec)} != {dim}")
            if code in vectors:
                log.warning("%s:%d: duplicate code %r, last occurrence wins",
                            path, lineno, code)
            vectors[code] = vec
    return vectors, (dim or 0)


def write_vector_file(path: str | Path, table: EmbeddingTable) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for code, row in zip(table.vocabulary, table.vectors):
            fh.write(json.dumps({"code": code, "vector": row.tolist()}) + "\n")


def load_text_embeddings(path: str | Path, vocab: list[str],
                         descriptions: dict[str, str] | None = None,
                         d_t: int | None = None) -> EmbeddingTable:
    """Text-embedding table aligned to ``vocab`` order.

    Codes absent from the file are filled by ``hashed_fallback`` (using
    ``descriptions`` when given) and counted in a single warning. An
    empty file requires an explicit ``d_t``.
    """
    vectors, file_dim = read_vector_file(path)
    if file_dim == 0:
        if d_t is None:
            raise DataError(f"{path}: no vectors and no fallback dimension given")
        dim = d_t
    else:
        dim = file_dim
    descriptions = descriptions or {}
    out = np.zeros((len(vocab), dim), dtype=np.float64)
    missing = 0
    for i, code in enumerate(vocab):
        if code in vectors:
            out[i] = vectors[code]
        else:
            out[i] = hashed_fallback(code, descriptions.get(code, ""), dim)
            missing += 1
    if missing:
        log.warning("%s: %d of %d codes missing from vector file, hashed fallback used",
                    path, missing, len(vocab))
    return EmbeddingTable(vocabulary=list(vocab), vectors=out, source="textual")


def fallback_text_embeddings(vocab: list[str], descriptions: dict[str, str],
                             d_t: int) -> EmbeddingTable:
    """All-fallback table (no vector file at all)."""
    out = np.stack([hashed_fallback(c, descriptions.get(c, ""), d_t) for c in vocab])
    return EmbeddingTable(vocabulary=list(vocab), vectors=out, source="textual")


def zero_text_embeddings(vocab: list[str], d_t: int) -> EmbeddingTable:
    """Zeroed text block, for the no-text ablation."""
    return EmbeddingTable(vocabulary=list(vocab),
                          vectors=np.zeros((len(vocab), d_t)), source="textual")


def concat_features(structural: EmbeddingTable, textual: EmbeddingTable) -> FeatureTable:
    """Row-wise [structural ; textual] concatenation."""
    if structural.vocabulary != textual.vocabulary:
        s, t = set(structural.vocabulary), set(textual.vocabulary)
        diff = sorted(s.symmetric_difference(t))
        raise DataError(f"vocabulary mismatch between embedding tables: {diff}"
                        if diff else "vocabulary order differs between embedding tables")
    matrix = np.concatenate([structural.vectors, textual.vectors], axis=1)
    if not np.all(np.isfinite(matrix)):
        raise DataError("feature table contains non-finite entries")
    return FeatureTable(vocabulary=list(structural.vocabulary), matrix=matrix,
                        d_structural=structural.dim, d_text=textual.dim)
