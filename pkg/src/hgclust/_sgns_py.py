"""Pure-Python skip-gram negative-sampling kernel.

Fallback twin of the compiled kernel in ``_sgns.pyx``: same update rule,
same LCG random stream for negative draws, same learning-rate decay. The
compiled kernel runs per-coordinate C loops while this one uses numpy row
operations, so the two backends agree statistically but not bit-for-bit.
Each backend is individually deterministic under a fixed seed.
"""

from __future__ import annotations

import math

import numpy as np

_LCG_MULT = 25214903917
_LCG_INC = 11
_LCG_MASK = (1 << 64) - 1
_LR_FLOOR = 1e-4  # fraction of the initial rate


def _sigmoid(x: float) -> float:
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def train_epoch(tokens, offsets, syn0, syn1, neg_table, window, negatives,
                lr0, total_tokens, tokens_done, next_random, loss_out):
    """Run one epoch of SGNS over the walk corpus.

    tokens: int32 flat corpus; offsets: int64 walk boundaries (n_walks+1).
    syn0/syn1: input/output vectors, updated in place. loss_out: optional
    float64 buffer receiving the per-pair logistic loss. Returns
    (next_random, n_pairs, tokens_done).
    """
    table_size = len(neg_table)
    n_pairs = 0
    dim = syn0.shape[1]
    neu1e = np.zeros(dim, dtype=np.float64)

    for w in range(len(offsets) - 1):
        start, end = int(offsets[w]), int(offsets[w + 1])
        for pos in range(start, end):
            center = int(tokens[pos])
            frac = 1.0 - tokens_done / (total_tokens + 1.0)
            if frac < _LR_FLOOR:
                frac = _LR_FLOOR
            alpha = lr0 * frac
            tokens_done += 1
            lo = max(start, pos - window)
            hi = min(end - 1, pos + window)
            for cpos in range(lo, hi + 1):
                if cpos == pos:
                    continue
                context = int(tokens[cpos])
                if context == center:
                    continue
                # One positive plus `negatives` sampled targets; a negative
                # equal to the positive context is skipped (word2vec rule).
                neu1e[:] = 0.0
                u = syn0[center]
                pair_loss = 0.0
                for d in range(negatives + 1):
                    if d == 0:
                        target = context
                        label = 1.0
                    else:
                        next_random = (next_random * _LCG_MULT + _LCG_INC) & _LCG_MASK
                        target = int(neg_table[(next_random >> 16) % table_size])
                        if target == context:
                            continue
                        label = 0.0
                    v = syn1[target]
                    s = _sigmoid(float(np.dot(u, v)))
                    if loss_out is not None:
                        p = s if label == 1.0 else 1.0 - s
                        pair_loss -= math.log(p if p > 1e-12 else 1e-12)
                    g = (label - s) * alpha
                    neu1e += g * v
                    v += g * u
                u += neu1e
                if loss_out is not None:
                    loss_out[n_pairs] = pair_loss
                n_pairs += 1
    return next_random, n_pairs, tokens_done
