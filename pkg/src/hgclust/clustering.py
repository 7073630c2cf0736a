"""Dual deep-embedded clustering over node and hyperedge embeddings.

Each domain keeps K trainable centroids. Soft assignments use the
Student-t kernel (1 + ||x - u||^2)^-1 normalized per row; the sharpened
target distribution squares and frequency-normalizes them, and the
self-training loss is KL(P || Q) with P held constant in backward.
Centroids are initialized with k-means++ and Lloyd iterations on the
embeddings present at the end of the warm-up phase.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import engine as en
from .engine import Tensor
from .errors import DataError, NumericsError


@dataclass
class ClusterState:
    domain: str                      # "node" | "hyperedge"
    k: int
    centroids: Tensor                # (K, d), trainable
    q: np.ndarray | None = None      # last soft assignments
    p: np.ndarray | None = None      # current sharpened target
    last_refresh: int = field(default=-1)

    def __post_init__(self):
        if self.k < 2:
            raise DataError("cluster state requires K >= 2")


def kmeans_init(embeddings: np.ndarray, k: int, seed: int) -> np.ndarray:
    """k-means++ seeding followed by Lloyd iterations to convergence.

    Stops when the largest centroid shift drops below 1e-6 or after 100
    iterations. Deterministic under seed; requires at least k distinct
    points.
    """
    x = np.asarray(embeddings, dtype=np.float64)
    n = x.shape[0]
    if len(np.unique(x, axis=0)) < k:
        raise DataError(f"kmeans: need at least {k} distinct points")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))

    centroids = np.empty((k, x.shape[1]), dtype=np.float64)
    centroids[0] = x[rng.integers(n)]
    d2 = ((x - centroids[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        centroids[j] = x[rng.choice(n, p=d2 / d2.sum())]
        d2 = np.minimum(d2, ((x - centroids[j]) ** 2).sum(axis=1))

    for _ in range(100):
        dist = ((x[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        assign = dist.argmin(axis=1)
        new = np.empty_like(centroids)
        for j in range(k):
            members = assign == j
            if members.any():
                new[j] = x[members].mean(axis=0)
            else:
                # Re-seed an emptied cluster at the worst-served point.
                new[j] = x[dist.min(axis=1).argmax()]
        shift = np.sqrt(((new - centroids) ** 2).sum(axis=1)).max()
        centroids = new
        if shift < 1e-6:
            break
    return centroids


def soft_assign(embeddings, centroids) -> Tensor:
    """Rows of Student-t kernel similarities, normalized to probabilities.

    Differentiable with respect to both inputs; rows sum to 1 exactly up
    to rounding because the kernel is strictly positive.
    """
    x = en.as_tensor(embeddings)
    u = en.as_tensor(centroids)
    x2 = en.tsum(en.mul(x, x), axis=1, keepdims=True)            # (n, 1)
    u2 = en.transpose(en.tsum(en.mul(u, u), axis=1, keepdims=True))  # (1, K)
    cross = en.matmul(x, en.transpose(u))                         # (n, K)
    d2 = en.sub(en.add(x2, u2), en.mul(2.0, cross))
    kernel = en.div(1.0, en.add(1.0, en.clip(d2, 0.0, np.inf)))
    return en.div(kernel, en.tsum(kernel, axis=1, keepdims=True))


def target_distribution(q: np.ndarray) -> np.ndarray:
    """Sharpened target: square assignments, normalize by cluster mass.

    Clusters with zero total mass contribute nothing; a row whose
    normalizer vanishes means Q was degenerate and is an error.
    """
    q = np.asarray(q, dtype=np.float64)
    f = q.sum(axis=0)
    weighted = np.where(f > 0.0, q * q / np.where(f > 0.0, f, 1.0), 0.0)
    norm = weighted.sum(axis=1, keepdims=True)
    if np.any(norm <= 0.0):
        rows = np.nonzero(norm.ravel() <= 0.0)[0]
        raise NumericsError(f"target_distribution: degenerate rows {rows.tolist()}")
    return weighted / norm


def kl_cluster_loss(p: np.ndarray, q: Tensor) -> Tensor:
    """KL(P || Q) with P detached; gradients reach Q only.

    0 * log 0 terms on the P side contribute zero by convention.
    """
    p = np.asarray(p, dtype=np.float64)
    if p.shape != q.shape:
        raise DataError(f"kl: shape mismatch {p.shape} vs {q.shape}")
    p_log_p = float(np.where(p > 0.0, p * np.log(np.where(p > 0.0, p, 1.0)), 0.0).sum())
    cross = en.tsum(en.mul(Tensor(p), en.log(q)))
    return en.sub(p_log_p, cross)


def soft_assign_np(embeddings: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Numpy-only twin of soft_assign for refresh/eval paths."""
    with en.no_grad():
        return soft_assign(embeddings, centroids).data
