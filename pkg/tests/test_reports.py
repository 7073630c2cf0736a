"""Cluster report construction and CSV/PCA exports."""

import csv

import numpy as np
import pytest

from hgclust.errors import DataError
from hgclust.hypergraph import build_hypergraph
from hgclust.model import build_incidence
from hgclust.reports import (build_cluster_report, pca_2d,
                             write_alignment_csv, write_assignments_csv,
                             write_projections_csv)


def toy_graph():
    return build_hypergraph([
        ("v0", ["a", "b"], [1]),
        ("v1", ["b", "c"], [0]),
        ("v2", ["c", "d"], [1]),
    ])


def test_report_ranks_by_assignment_probability():
    g = toy_graph()
    inc = build_incidence(g)
    q_nodes = np.array([[0.9, 0.1], [0.8, 0.2], [0.2, 0.8], [0.1, 0.9]])
    q_edges = np.array([[0.95, 0.05], [0.5, 0.5], [0.1, 0.9]])
    attention = np.linspace(1.0, 0.1, len(inc.member_nodes))
    report = build_cluster_report(g, inc, q_nodes, q_edges, attention,
                                  {"a": "alpha"}, n_top_concepts=2,
                                  m_top_visits=1, visit_concepts=2)
    assert report.n_clusters == 2
    c0 = report.clusters[0]
    assert [c["code"] for c in c0["top_concepts"]] == ["a", "b"]
    assert c0["top_concepts"][0]["description"] == "alpha"
    assert c0["top_visits"][0]["visit_id"] == "v0"
    assert c0["outcome_rate"] == 1.0
    c1 = report.clusters[1]
    assert [c["code"] for c in c1["top_concepts"]] == ["d", "c"]
    assert c1["top_visits"][0]["visit_id"] == "v2"
    # per-visit attention ranking follows the weights
    top_attn = c0["top_visits"][0]["top_concepts_by_attention"]
    assert top_attn[0]["attention"] >= top_attn[-1]["attention"]


def test_report_requires_matching_k_and_k_at_least_two():
    g = toy_graph()
    inc = build_incidence(g)
    with pytest.raises(DataError):
        build_cluster_report(g, inc, np.ones((4, 2)), np.ones((3, 3)),
                             np.ones(len(inc.member_nodes)))
    with pytest.raises(DataError):
        build_cluster_report(g, inc, np.ones((4, 1)), np.ones((3, 1)),
                             np.ones(len(inc.member_nodes)))


def test_report_deterministic():
    g = toy_graph()
    inc = build_incidence(g)
    rng = np.random.Generator(np.random.PCG64(0))
    q_nodes = rng.dirichlet(np.ones(2), size=4)
    q_edges = rng.dirichlet(np.ones(2), size=3)
    attention = rng.random(len(inc.member_nodes))
    a = build_cluster_report(g, inc, q_nodes, q_edges, attention).to_json()
    b = build_cluster_report(g, inc, q_nodes, q_edges, attention).to_json()
    assert a == b


def test_assignments_csv_layout(tmp_path):
    path = tmp_path / "assign.csv"
    q = np.array([[0.7, 0.3], [0.2, 0.8]])
    write_assignments_csv(path, ["x", "y"], "node", q)
    rows = list(csv.DictReader(open(path)))
    assert rows[0]["item_id"] == "x" and rows[0]["cluster"] == "0"
    assert rows[1]["domain"] == "node" and float(rows[1]["q_2"]) == 0.8


def test_alignment_csv_layout(tmp_path):
    path = tmp_path / "align.csv"
    d = np.array([[-0.9, 0.1, 0.3], [0.2, -0.8, 0.0], [0.5, 0.4, -0.7]])
    write_alignment_csv(path, d, d.argmin(axis=1), margin=1.0)
    rows = list(csv.DictReader(open(path)))
    assert [r["matched_edge_cluster"] for r in rows] == ["0", "1", "2"]
    # anchor 0 hinges: max(0, -0.9 - 0.1 + 1) = 0, max(0, -0.9 - 0.3 + 1) = 0
    assert float(rows[0]["hinge_neg_1"]) == 0.0


def test_pca_projects_to_two_dims_deterministically():
    rng = np.random.Generator(np.random.PCG64(1))
    x = rng.normal(size=(30, 6))
    a, b = pca_2d(x), pca_2d(x)
    assert a.shape == (30, 2)
    assert np.array_equal(a, b)
    # 1-D data still yields two columns (second is zero)
    flat = pca_2d(rng.normal(size=(10, 1)))
    assert flat.shape == (10, 2) and np.allclose(flat[:, 1], 0.0)


def test_projections_csv(tmp_path):
    path = tmp_path / "proj.csv"
    rng = np.random.Generator(np.random.PCG64(2))
    write_projections_csv(path, ["a", "b"], rng.normal(size=(2, 4)),
                          np.array([0, 1]), ["v0"], rng.normal(size=(1, 4)),
                          np.array([1]))
    rows = list(csv.DictReader(open(path)))
    assert len(rows) == 3
    assert {r["domain"] for r in rows} == {"node", "hyperedge"}
