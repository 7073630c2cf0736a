"""Skip-gram with negative sampling over hypergraph walk corpora.

Produces the structural half of the initial node features. The inner
training loop has two interchangeable backends: a compiled Cython kernel
(built by setup.py) and a pure-Python fallback, selected at import.
``HGCLUST_PURE_SGNS=1`` forces the fallback. Only input vectors are kept;
context vectors are discarded.
"""

from __future__ import annotations

import os

import numpy as np

from .errors import DataError
from .features import EmbeddingTable
from .hypergraph import WalkCorpus

if os.environ.get("HGCLUST_PURE_SGNS") == "1":
    from . import _sgns_py as _kernel
    BACKEND = "python"
else:
    try:
        from . import _sgns as _kernel  # type: ignore[attr-defined]
        BACKEND = "cython"
    except ImportError:
        from . import _sgns_py as _kernel
        BACKEND = "python"

_NEG_TABLE_SIZE = 1_000_000
_UNIGRAM_POWER = 0.75


def build_negative_table(counts: np.ndarray, size: int = _NEG_TABLE_SIZE) -> np.ndarray:
    """Sampling table proportional to count^0.75 (word2vec layout)."""
    weights = np.power(counts.astype(np.float64), _UNIGRAM_POWER)
    total = weights.sum()
    if total <= 0:
        raise DataError("negative table: no token occurrences")
    bounds = np.cumsum(weights) / total
    positions = (np.arange(size) + 0.5) / size
    return np.searchsorted(bounds, positions, side="right").astype(np.int32)


def flatten_corpus(corpus: WalkCorpus) -> tuple[np.ndarray, np.ndarray]:
    tokens = np.concatenate(corpus.walks).astype(np.int32)
    offsets = np.cumsum([0] + [len(w) for w in corpus.walks]).astype(np.int64)
    return tokens, offsets


def train_skipgram(corpus: WalkCorpus, vocab: list[str], dim: int, window: int,
                   negatives: int, epochs: int, lr: float, seed: int,
                   return_loss: bool = False):
    """Train node embeddings on the walk corpus; deterministic under seed.

    Returns an EmbeddingTable, or (table, per-pair loss array) when
    ``return_loss`` is set.
    """
    if dim < 1 or window < 1 or negatives < 1:
        raise DataError("skipgram: dim, window and negatives must be >= 1")
    if not corpus.walks or corpus.n_tokens == 0:
        raise DataError("skipgram: empty walk corpus")

    tokens, offsets = flatten_corpus(corpus)
    n_vocab = len(vocab)
    if tokens.max(initial=0) >= n_vocab:
        raise DataError("skipgram: corpus token out of vocabulary range")

    counts = np.bincount(tokens, minlength=n_vocab)
    neg_table = build_negative_table(counts)

    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    syn0 = (rng.random((n_vocab, dim)) - 0.5) / dim
    syn1 = np.zeros((n_vocab, dim), dtype=np.float64)

    # word2vec-style 64-bit LCG stream for negative draws.
    next_random = seed & ((1 << 64) - 1)

    total_tokens = int(len(tokens)) * epochs
    tokens_done = 0
    max_pairs = len(tokens) * 2 * window
    all_losses = [] if return_loss else None
    loss_buf = np.zeros(max_pairs, dtype=np.float64) if return_loss else None

    for _ in range(epochs):
        next_random, n_pairs, tokens_done = _kernel.train_epoch(
            tokens, offsets, syn0, syn1, neg_table, window, negatives,
            lr, total_tokens, tokens_done, int(next_random), loss_buf)
        if return_loss:
            all_losses.append(loss_buf[:n_pairs].copy())

    table = EmbeddingTable(vocabulary=list(vocab), vectors=syn0, source="structural")
    if return_loss:
        return table, np.concatenate(all_losses) if all_losses else np.empty(0)
    return table
