"""Contrastive alignment of node-domain and hyperedge-domain clusters.

Soft centroids (assignment-weighted embedding means) from the two domains
are pushed through per-domain projection heads into a shared space. Each
node-domain centroid anchors a triplet: its positive is the most similar
hyperedge-domain centroid under negative cosine distance (recomputed
every step; cluster indices carry no correspondence), all other rows are
negatives, and hinge terms are averaged over the K*(K-1) triplets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import engine as en
from .engine import Tensor
from .errors import DataError, NumericsError


class ProjectionHead:
    """Linear -> BatchNorm -> ReLU -> Linear, over a batch of K centroid rows."""

    def __init__(self, dim_in: int, dim_out: int, seed: int, name: str,
                 stream: int = 0):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(
            entropy=seed, spawn_key=(7, stream))))
        limit = np.sqrt(6.0 / (dim_in + dim_out))
        self.name = name
        self.params: dict[str, Tensor] = {
            f"{name}.w1": Tensor(rng.uniform(-limit, limit, (dim_in, dim_out)),
                                 requires_grad=True),
            f"{name}.b1": Tensor(np.zeros(dim_out), requires_grad=True),
            f"{name}.bn.g": Tensor(np.ones(dim_out), requires_grad=True),
            f"{name}.bn.b": Tensor(np.zeros(dim_out), requires_grad=True),
            f"{name}.w2": Tensor(rng.uniform(-limit, limit, (dim_out, dim_out)),
                                 requires_grad=True),
            f"{name}.b2": Tensor(np.zeros(dim_out), requires_grad=True),
        }
        self.running_mean = np.zeros(dim_out)
        self.running_var = np.ones(dim_out)

    def __call__(self, centroids, training: bool) -> Tensor:
        p = self.params
        n = self.name
        h = en.add(en.matmul(en.as_tensor(centroids), p[f"{n}.w1"]), p[f"{n}.b1"])
        h = en.batch_norm(h, p[f"{n}.bn.g"], p[f"{n}.bn.b"],
                          self.running_mean, self.running_var, training)
        return en.add(en.matmul(en.relu(h), p[f"{n}.w2"]), p[f"{n}.b2"])

    def buffers(self) -> dict[str, np.ndarray]:
        return {f"{self.name}.bn.rm": self.running_mean,
                f"{self.name}.bn.rv": self.running_var}


@dataclass
class AlignedCentroids:
    c_nodes: np.ndarray          # (K, d) soft centroids, node domain
    c_edges: np.ndarray
    z_nodes: np.ndarray          # (K, d_p) projections
    z_edges: np.ndarray
    pairing: np.ndarray          # positive hyperedge-cluster per anchor
    margin: float


def soft_centroids(embeddings, q) -> Tensor:
    """Assignment-weighted centroid per cluster: sum_i q_ik x_i / sum_i q_ik."""
    x = en.as_tensor(embeddings)
    q = en.as_tensor(q)
    mass = q.data.sum(axis=0)
    empty = np.nonzero(mass <= 0.0)[0]
    if empty.size:
        raise DataError(f"soft_centroids: empty soft clusters {empty.tolist()}")
    qt = en.transpose(q)                                   # (K, n)
    totals = en.tsum(qt, axis=1, keepdims=True)            # (K, 1)
    return en.div(en.matmul(qt, x), totals)


def _normalize_rows(z: Tensor) -> Tensor:
    norms = en.sqrt(en.tsum(en.mul(z, z), axis=1, keepdims=True))
    if np.any(norms.data == 0.0):
        raise NumericsError("cosine distance undefined for zero vectors")
    return en.div(z, norms)


def neg_cosine(z_a, z_b) -> Tensor:
    """Negative cosine similarity of two vectors, in [-1, 1]."""
    a = en.reshape(en.as_tensor(z_a), (1, -1))
    b = en.reshape(en.as_tensor(z_b), (1, -1))
    d = en.neg(en.matmul(_normalize_rows(a), en.transpose(_normalize_rows(b))))
    return en.reshape(d, ())


def distance_matrix(z_v, z_e) -> Tensor:
    """All-pairs negative cosine distances, anchors in rows."""
    return en.neg(en.matmul(_normalize_rows(en.as_tensor(z_v)),
                            en.transpose(_normalize_rows(en.as_tensor(z_e)))))


def align_positive(z_v: np.ndarray, z_e: np.ndarray) -> np.ndarray:
    """Most similar hyperedge-centroid index per anchor (ties: lowest index)."""
    with en.no_grad():
        d = distance_matrix(z_v, z_e).data
    return d.argmin(axis=1)


def triplet_align_loss(z_v, z_e, margin: float) -> tuple[Tensor, np.ndarray]:
    """Margin hinge over all anchors and negatives, averaged.

    Returns (loss, pairing). The positive per anchor is recomputed from
    the current projections; requires K >= 2 so a negative exists.
    """
    z_v, z_e = en.as_tensor(z_v), en.as_tensor(z_e)
    k = z_v.shape[0]
    if k < 2:
        raise DataError("triplet alignment requires K >= 2")
    d = distance_matrix(z_v, z_e)
    pairing = d.data.argmin(axis=1)
    onehot = np.zeros((k, k))
    onehot[np.arange(k), pairing] = 1.0
    d_pos = en.tsum(en.mul(d, Tensor(onehot)), axis=1, keepdims=True)
    hinge = en.relu(en.add(en.sub(d_pos, d), margin))
    total = en.tsum(en.mul(hinge, Tensor(1.0 - onehot)))
    return en.div(total, float(k * (k - 1))), pairing
