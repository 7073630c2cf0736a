# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled skip-gram negative-sampling kernel (twin of _sgns_py)."""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log

cdef double _LR_FLOOR = 1e-4
cdef unsigned long long _LCG_MULT = 25214903917ULL
cdef unsigned long long _LCG_INC = 11ULL


cdef inline double _sigmoid(double x) nogil:
    cdef double e
    if x >= 0.0:
        return 1.0 / (1.0 + exp(-x))
    e = exp(x)
    return e / (1.0 + e)


def train_epoch(cnp.int32_t[::1] tokens, cnp.int64_t[::1] offsets,
                double[:, ::1] syn0, double[:, ::1] syn1,
                cnp.int32_t[::1] neg_table, int window, int negatives,
                double lr0, long long total_tokens, long long tokens_done,
                unsigned long long next_random, loss_out):
    """Same contract as hgclust._sgns_py.train_epoch."""
    cdef long long table_size = neg_table.shape[0]
    cdef long long n_pairs = 0
    cdef int dim = syn0.shape[1]
    cdef cnp.ndarray[double, ndim=1] neu1e_arr = np.zeros(dim, dtype=np.float64)
    cdef double[::1] neu1e = neu1e_arr
    cdef double[::1] losses
    cdef bint track_loss = loss_out is not None
    if track_loss:
        losses = loss_out

    cdef long long w, pos, cpos, start, end
    cdef int d, j, center, context, target
    cdef double frac, alpha, label, f, s, g, pair_loss, p

    for w in range(offsets.shape[0] - 1):
        start = offsets[w]
        end = offsets[w + 1]
        for pos in range(start, end):
            center = tokens[pos]
            frac = 1.0 - tokens_done / (total_tokens + 1.0)
            if frac < _LR_FLOOR:
                frac = _LR_FLOOR
            alpha = lr0 * frac
            tokens_done += 1
            for cpos in range(max(start, pos - window), min(end - 1, pos + window) + 1):
                if cpos == pos:
                    continue
                context = tokens[cpos]
                if context == center:
                    continue
                for j in range(dim):
                    neu1e[j] = 0.0
                pair_loss = 0.0
                for d in range(negatives + 1):
                    if d == 0:
                        target = context
                        label = 1.0
                    else:
                        next_random = next_random * _LCG_MULT + _LCG_INC
                        target = neg_table[(next_random >> 16) % table_size]
                        if target == context:
                            continue
                        label = 0.0
                    f = 0.0
                    for j in range(dim):
                        f += syn0[center, j] * syn1[target, j]
                    s = _sigmoid(f)
                    if track_loss:
                        p = s if label == 1.0 else 1.0 - s
                        pair_loss -= log(p if p > 1e-12 else 1e-12)
                    g = (label - s) * alpha
                    for j in range(dim):
                        neu1e[j] += g * syn1[target, j]
                    for j in range(dim):
                        syn1[target, j] += g * syn0[center, j]
                for j in range(dim):
                    syn0[center, j] += neu1e[j]
                if track_loss:
                    losses[n_pairs] = pair_loss
                n_pairs += 1
    return next_random, n_pairs, tokens_done
