"""Cluster-facing exports: assignment tables, alignment diagnostics,
2-D projection coordinates, and the per-cluster case-study report
(top concepts by assignment probability, top visits with their most
attended concepts, and the outcome rate among those visits)."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError
from .hypergraph import Hypergraph
from .model import IncidenceCache


def write_assignments_csv(path: str | Path, item_ids: list[str], domain: str,
                          q: np.ndarray) -> None:
    """item_id, domain, argmax cluster, q_1..q_K."""
    q = np.asarray(q, dtype=np.float64)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["item_id", "domain", "cluster"]
                        + [f"q_{k + 1}" for k in range(q.shape[1])])
        for i, item in enumerate(item_ids):
            writer.writerow([item, domain, int(q[i].argmax())]
                            + [f"{v:.10g}" for v in q[i]])


def write_alignment_csv(path: str | Path, d_matrix: np.ndarray,
                        pairing: np.ndarray, margin: float) -> None:
    """Per anchor: matched cluster, its distance, hinge per negative."""
    k = d_matrix.shape[0]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["anchor_cluster", "matched_edge_cluster", "distance"]
                        + [f"hinge_neg_{j + 1}" for j in range(k - 1)])
        for i in range(k):
            pos = int(pairing[i])
            d_pos = d_matrix[i, pos]
            hinges = [max(0.0, d_pos - d_matrix[i, j] + margin)
                      for j in range(k) if j != pos]
            writer.writerow([i, pos, f"{d_pos:.10g}"]
                            + [f"{h:.10g}" for h in hinges])


def pca_2d(points: np.ndarray) -> np.ndarray:
    """First two principal components, sign-fixed for determinism."""
    x = np.asarray(points, dtype=np.float64)
    centered = x - x.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    comps = vt[:2] if vt.shape[0] >= 2 else np.vstack([vt, np.zeros((2 - vt.shape[0], vt.shape[1]))])
    for row in range(comps.shape[0]):
        pivot = np.argmax(np.abs(comps[row]))
        if comps[row, pivot] < 0:
            comps[row] = -comps[row]
    return centered @ comps.T


def write_projections_csv(path: str | Path, node_ids: list[str],
                          node_points: np.ndarray, node_clusters: np.ndarray,
                          edge_ids: list[str], edge_points: np.ndarray,
                          edge_clusters: np.ndarray) -> None:
    coords_n = pca_2d(node_points)
    coords_e = pca_2d(edge_points)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["item_id", "domain", "cluster", "x", "y"])
        for i, item in enumerate(node_ids):
            writer.writerow([item, "node", int(node_clusters[i]),
                             f"{coords_n[i, 0]:.10g}", f"{coords_n[i, 1]:.10g}"])
        for i, item in enumerate(edge_ids):
            writer.writerow([item, "hyperedge", int(edge_clusters[i]),
                             f"{coords_e[i, 0]:.10g}", f"{coords_e[i, 1]:.10g}"])


@dataclass
class ClusterReport:
    n_clusters: int
    top_concepts: int
    top_visits: int
    clusters: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps({"n_clusters": self.n_clusters,
                           "top_concepts": self.top_concepts,
                           "top_visits": self.top_visits,
                           "clusters": self.clusters}, indent=2, sort_keys=True)


def build_cluster_report(g: Hypergraph, inc: IncidenceCache,
                         q_nodes: np.ndarray, q_edges: np.ndarray,
                         attention: np.ndarray,
                         descriptions: dict[str, str] | None = None,
                         n_top_concepts: int = 15, m_top_visits: int = 3,
                         visit_concepts: int = 5) -> ClusterReport:
    """Rank concepts and visits per cluster.

    Concepts rank by their assignment-probability column; visits likewise,
    annotated with their most attended member concepts (final-layer
    hyperedge aggregation weights, head-averaged) and the outcome rate
    over the selected visits.
    """
    q_nodes = np.asarray(q_nodes, dtype=np.float64)
    q_edges = np.asarray(q_edges, dtype=np.float64)
    if q_nodes.shape[1] != q_edges.shape[1]:
        raise DataError("cluster report: domains must share K")
    k = q_nodes.shape[1]
    if k < 2:
        raise DataError("cluster report requires K >= 2")
    descriptions = descriptions or {}
    edge_ends = np.append(inc.edge_starts[1:], len(inc.member_nodes))

    clusters = []
    for c in range(k):
        concept_order = np.argsort(-q_nodes[:, c], kind="stable")[:n_top_concepts]
        top_concepts = [{"code": g.node_ids[i],
                         "description": descriptions.get(g.node_ids[i], ""),
                         "q": float(q_nodes[i, c])} for i in concept_order]
        visit_order = np.argsort(-q_edges[:, c], kind="stable")[:m_top_visits]
        top_visits = []
        for e in visit_order:
            lo, hi = int(inc.edge_starts[e]), int(edge_ends[e])
            members = inc.member_nodes[lo:hi]
            weights = attention[lo:hi]
            best = np.argsort(-weights, kind="stable")[:visit_concepts]
            top_visits.append({
                "visit_id": g.edge_ids[e],
                "q": float(q_edges[e, c]),
                "labels": [int(v) for v in g.labels[e]],
                "top_concepts_by_attention": [
                    {"code": g.node_ids[members[j]], "attention": float(weights[j])}
                    for j in best],
            })
        outcome = float(g.labels[visit_order].mean()) if len(visit_order) else 0.0
        clusters.append({"cluster": c, "top_concepts": top_concepts,
                         "top_visits": top_visits, "outcome_rate": outcome})
    return ClusterReport(n_clusters=k, top_concepts=n_top_concepts,
                         top_visits=m_top_visits, clusters=clusters)
