"""Seeded gradient-check suites for the CLI and the acceptance tests.

Each suite builds a small instance (at most 8 nodes / 4 hyperedges, K=3)
and verifies every parameter coordinate of its loss path against central
finite differences.
"""

from __future__ import annotations

import numpy as np

from .alignment import ProjectionHead, soft_centroids, triplet_align_loss
from .clustering import (kl_cluster_loss, kmeans_init, soft_assign,
                         target_distribution)
from .engine import Tensor, no_grad
from .gradcheck import GradCheckReport, grad_check
from .hypergraph import build_hypergraph
from .model import ModelState, TransformerConfig, bce_loss, build_incidence, forward
from .training import total_loss

MODULES = ("transformer", "cluster", "align")


def _tiny_graph():
    records = [
        ("v0", ["a", "b", "c"], [1, 0]),
        ("v1", ["b", "d"], [0, 1]),
        ("v2", ["c", "d", "e", "f"], [1, 1]),
        ("v3", ["a", "f"], [0, 0]),
    ]
    return build_hypergraph(records)


def transformer_suite(seed: int = 1234):
    g = _tiny_graph()
    inc = build_incidence(g)
    cfg = TransformerConfig(layers=2, heads=2, hidden=8, ffn_hidden=8,
                            head_hidden=6, input_dim=5, label_width=2)
    model = ModelState(cfg, seed)
    rng = np.random.Generator(np.random.PCG64(seed))
    features = rng.normal(size=(g.n_nodes, cfg.input_dim))

    def loss_fn():
        res = forward(model, inc, features, training=False)
        return bce_loss(res.probs, g.labels)

    return loss_fn, model.params


def cluster_suite(seed: int = 1234, k: int = 3):
    rng = np.random.Generator(np.random.PCG64(seed))
    x = Tensor(rng.normal(size=(10, 4)), requires_grad=True)
    u = Tensor(rng.normal(size=(k, 4)), requires_grad=True)
    with no_grad():
        p = target_distribution(soft_assign(x, u).data)

    def loss_fn():
        return kl_cluster_loss(p, soft_assign(x, u))

    return loss_fn, {"embeddings": x, "centroids": u}


def align_suite(seed: int = 1234, k: int = 3):
    rng = np.random.Generator(np.random.PCG64(seed))
    x = Tensor(rng.normal(size=(8, 4)), requires_grad=True)
    e = Tensor(rng.normal(size=(6, 4)), requires_grad=True)
    u_x = Tensor(rng.normal(size=(k, 4)), requires_grad=True)
    u_e = Tensor(rng.normal(size=(k, 4)), requires_grad=True)
    head_v = ProjectionHead(4, 4, seed, "proj.v", stream=0)
    head_e = ProjectionHead(4, 4, seed, "proj.e", stream=1)
    # Populate running statistics, then check in evaluation mode (the
    # batch statistics of a K-row batch are not differentiable targets).
    with no_grad():
        for head, emb, cen in ((head_v, x, u_x), (head_e, e, u_e)):
            c = soft_centroids(emb, soft_assign(emb, cen))
            head(c, training=True)

    def loss_fn():
        c_v = soft_centroids(x, soft_assign(x, u_x))
        c_e = soft_centroids(e, soft_assign(e, u_e))
        z_v = head_v(c_v, training=False)
        z_e = head_e(c_e, training=False)
        loss, _ = triplet_align_loss(z_v, z_e, margin=1.0)
        return loss

    params = {"x": x, "e": e, "u_x": u_x, "u_e": u_e}
    params.update(head_v.params)
    params.update(head_e.params)
    return loss_fn, params


def joint_suite(seed: int = 2024):
    """Backbone + clustering + alignment through the total objective."""
    g = _tiny_graph()
    inc = build_incidence(g)
    cfg = TransformerConfig(layers=1, heads=2, hidden=8, ffn_hidden=8,
                            head_hidden=6, input_dim=4, label_width=2)
    model = ModelState(cfg, seed)
    rng = np.random.Generator(np.random.PCG64(seed))
    features = rng.normal(size=(g.n_nodes, cfg.input_dim))
    k = 3
    head_v = ProjectionHead(cfg.hidden, cfg.hidden, seed, "proj.v", stream=0)
    head_e = ProjectionHead(cfg.hidden, cfg.hidden, seed, "proj.e", stream=1)
    with no_grad():
        res = forward(model, inc, features)
        # Centroids seeded like the trainer does: k-means on the live
        # embeddings, so assignments (and the triplet pairing) are
        # informative rather than degenerate ties.
        u_x = Tensor(kmeans_init(res.node_embeddings.data, k, seed),
                     requires_grad=True)
        u_e = Tensor(kmeans_init(res.edge_embeddings.data, k, seed + 1),
                     requires_grad=True)
        p_v = target_distribution(soft_assign(res.node_embeddings, u_x).data)
        p_e = target_distribution(soft_assign(res.edge_embeddings, u_e).data)
        head_v(soft_centroids(res.node_embeddings,
                              soft_assign(res.node_embeddings, u_x)), training=True)
        head_e(soft_centroids(res.edge_embeddings,
                              soft_assign(res.edge_embeddings, u_e)), training=True)

    def loss_fn():
        res = forward(model, inc, features)
        cls = bce_loss(res.probs, g.labels)
        q_v = soft_assign(res.node_embeddings, u_x)
        q_e = soft_assign(res.edge_embeddings, u_e)
        l_v = kl_cluster_loss(p_v, q_v)
        l_e = kl_cluster_loss(p_e, q_e)
        z_v = head_v(soft_centroids(res.node_embeddings, q_v), training=False)
        z_e = head_e(soft_centroids(res.edge_embeddings, q_e), training=False)
        align, _ = triplet_align_loss(z_v, z_e, margin=1.0)
        return total_loss(cls, l_v, l_e, align, alpha=0.5, beta=0.5)

    params = dict(model.params)
    params.update({"u_x": u_x, "u_e": u_e})
    params.update(head_v.params)
    params.update(head_e.params)
    return loss_fn, params


def run_gradcheck(module: str = "all", eps: float = 1e-5,
                  tol: float = 1e-4) -> dict[str, GradCheckReport]:
    suites = {"transformer": transformer_suite, "cluster": cluster_suite,
              "align": align_suite}
    if module == "all":
        names = list(MODULES) + ["joint"]
        suites["joint"] = joint_suite
    elif module in suites:
        names = [module]
    else:
        raise ValueError(f"unknown gradcheck module '{module}'")
    reports = {}
    for name in names:
        loss_fn, params = suites[name]()
        reports[name] = grad_check(loss_fn, params, eps=eps, tol=tol)
    return reports
