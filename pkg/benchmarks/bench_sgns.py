#!/usr/bin/env python3
"""Benchmark the two skip-gram kernels (compiled vs pure Python).

Builds a walk corpus over a synthetic two-community hypergraph and times
one training epoch per backend. The compiled kernel is skipped when the
extension is not built.

    python3 benchmarks/bench_sgns.py [--nodes 200] [--dim 64]
"""

import argparse
import time

import numpy as np

from hgclust import _sgns_py, skipgram
from hgclust.hypergraph import build_hypergraph, random_walks

try:
    from hgclust import _sgns
except ImportError:
    _sgns = None


def build_corpus(n_nodes: int, seed: int):
    rng = np.random.Generator(np.random.PCG64(seed))
    half = n_nodes // 2
    records = []
    for e in range(n_nodes * 2):
        community = e % 2
        lo = 0 if community == 0 else half
        hi = half if community == 0 else n_nodes
        codes = rng.choice(np.arange(lo, hi), size=5, replace=False)
        records.append((f"v{e}", [f"c{c}" for c in codes], [community]))
    g = build_hypergraph(records)
    return g, random_walks(g, walk_len=40, walks_per_node=10, seed=seed)


def bench(kernel, name: str, tokens, offsets, n_vocab: int, dim: int) -> float:
    counts = np.bincount(tokens, minlength=n_vocab)
    table = skipgram.build_negative_table(counts)
    rng = np.random.Generator(np.random.PCG64(1))
    syn0 = (rng.random((n_vocab, dim)) - 0.5) / dim
    syn1 = np.zeros_like(syn0)
    t0 = time.perf_counter()
    _, n_pairs, _ = kernel.train_epoch(tokens, offsets, syn0, syn1, table,
                                       5, 5, 0.025, len(tokens), 0, 1, None)
    dt = time.perf_counter() - t0
    print(f"{name:12s} {dt:8.3f} s/epoch   {n_pairs / dt:12,.0f} pairs/s")
    return dt


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--nodes", type=int, default=200)
    parser.add_argument("--dim", type=int, default=64)
    parser.add_argument("--seed", type=int, default=42)
    args = parser.parse_args()

    g, corpus = build_corpus(args.nodes, args.seed)
    tokens, offsets = skipgram.flatten_corpus(corpus)
    print(f"corpus: {len(tokens):,} tokens over {g.n_nodes} nodes, dim={args.dim}")

    t_py = bench(_sgns_py, "pure python", tokens, offsets, g.n_nodes, args.dim)
    if _sgns is None:
        print("compiled kernel not built (python setup.py build_ext --inplace)")
    else:
        t_cy = bench(_sgns, "cython", tokens, offsets, g.n_nodes, args.dim)
        print(f"speedup: {t_py / t_cy:.1f}x")


if __name__ == "__main__":
    main()
