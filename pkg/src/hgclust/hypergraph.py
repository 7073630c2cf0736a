"""Hypergraph of coded visit records: nodes are concept codes, hyperedges
are visits. Provides construction from records, incidence queries, and
random-walk corpus generation for the structural embedding."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError


@dataclass
class Hypergraph:
    node_ids: list[str]                  # sorted concept-code vocabulary
    hyperedges: list[np.ndarray]         # member node indices per visit (sorted, unique)
    node_to_edges: list[np.ndarray]      # incident edge indices per node
    edge_ids: list[str]                  # visit ids, in input order
    labels: np.ndarray                   # (n_edges, label_width) in {0, 1}
    label_width: int

    @property
    def n_nodes(self) -> int:
        return len(self.node_ids)

    @property
    def n_edges(self) -> int:
        return len(self.hyperedges)

    def flat_incidence(self):
        """Flattened membership arrays for vectorized message passing.

        Returns (member_nodes, edge_starts, incident_edges, node_starts,
        active_nodes); the node-side arrays cover only nodes with at least
        one incident edge, listed in ``active_nodes``.
        """
        member_nodes = np.concatenate(self.hyperedges) if self.hyperedges else np.empty(0, np.intp)
        edge_starts = np.cumsum([0] + [len(e) for e in self.hyperedges])[:-1].astype(np.intp)
        active = [v for v in range(self.n_nodes) if len(self.node_to_edges[v]) > 0]
        incident = (np.concatenate([self.node_to_edges[v] for v in active])
                    if active else np.empty(0, np.intp))
        node_starts = np.cumsum([0] + [len(self.node_to_edges[v]) for v in active])[:-1]
        return (member_nodes.astype(np.intp), edge_starts,
                incident.astype(np.intp), node_starts.astype(np.intp),
                np.asarray(active, dtype=np.intp))


@dataclass
class WalkCorpus:
    walks: list[np.ndarray]
    walk_len: int
    walks_per_node: int
    seed: int

    @property
    def n_tokens(self) -> int:
        return sum(len(w) for w in self.walks)


def build_hypergraph(records: list[tuple[str, list[str], list[int]]]) -> Hypergraph:
    """Build the graph from (visit_id, codes, labels) records.

    The vocabulary is the sorted, deduplicated union of all codes;
    duplicate codes within a visit collapse to a single membership.
    """
    if not records:
        raise DataError("no visit records")
    empty = [vid for vid, codes, _ in records if len(codes) == 0]
    if empty:
        raise DataError(f"records with empty code list rejected: {empty}")
    widths = {len(labels) for _, _, labels in records}
    if len(widths) != 1:
        raise DataError(f"inconsistent label widths: {sorted(widths)}")
    label_width = widths.pop()

    vocab = sorted({c for _, codes, _ in records for c in codes})
    index = {c: i for i, c in enumerate(vocab)}

    hyperedges = []
    edge_ids = []
    labels = np.zeros((len(records), label_width), dtype=np.float64)
    for e, (vid, codes, lab) in enumerate(records):
        for y in lab:
            if y not in (0, 1):
                raise DataError(f"visit {vid}: labels must be 0/1, got {y}")
        members = np.unique([index[c] for c in codes]).astype(np.intp)
        hyperedges.append(members)
        edge_ids.append(vid)
        labels[e] = lab

    node_to_edges: list[list[int]] = [[] for _ in vocab]
    for e, members in enumerate(hyperedges):
        for v in members:
            node_to_edges[v].append(e)
    inverse = [np.asarray(es, dtype=np.intp) for es in node_to_edges]

    return Hypergraph(node_ids=vocab, hyperedges=hyperedges,
                      node_to_edges=inverse, edge_ids=edge_ids,
                      labels=labels, label_width=label_width)


def random_walks(g: Hypergraph, walk_len: int, walks_per_node: int,
                 seed: int, edge_subset: np.ndarray | None = None) -> WalkCorpus:
    """Node -> random incident hyperedge -> random member node, repeated.

    Each node starts ``walks_per_node`` walks. Per-walk generators are
    derived from (seed, node, walk) so the corpus is independent of
    generation order. Isolated nodes emit the node repeated.
    ``edge_subset`` restricts the walkable hyperedges (inductive mode).
    """
    if walk_len < 2:
        raise DataError("walk_len must be >= 2")
    if g.n_nodes == 0:
        raise DataError("empty hypergraph")

    if edge_subset is not None:
        allowed = set(int(e) for e in edge_subset)
        incident = [np.asarray([e for e in es if int(e) in allowed], dtype=np.intp)
                    for es in g.node_to_edges]
    else:
        incident = g.node_to_edges

    walks = []
    for v in range(g.n_nodes):
        for w in range(walks_per_node):
            rng = np.random.Generator(np.random.PCG64(
                np.random.SeedSequence(entropy=seed, spawn_key=(v, w))))
            walk = np.empty(walk_len, dtype=np.intp)
            walk[0] = v
            if len(incident[v]) == 0:
                walk[:] = v
                walks.append(walk)
                continue
            u = rng.random(size=2 * (walk_len - 1))
            cur = v
            for t in range(1, walk_len):
                edges = incident[cur]
                e = edges[int(u[2 * t - 2] * len(edges))]
                members = g.hyperedges[e]
                cur = int(members[int(u[2 * t - 1] * len(members))])
                walk[t] = cur
            walks.append(walk)
    return WalkCorpus(walks=walks, walk_len=walk_len,
                      walks_per_node=walks_per_node, seed=seed)


# -- file formats ---------------------------------------------------------


def read_visits_jsonl(path: str | Path) -> list[tuple[str, list[str], list[int]]]:
    """One JSON object per line: {"visit_id", "codes", "labels"}."""
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                records.append((str(obj["visit_id"]),
                                [str(c) for c in obj["codes"]],
                                [int(y) for y in obj["labels"]]))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise DataError(f"{path}:{lineno}: malformed visit record ({exc})")
    if not records:
        raise DataError(f"{path}: no visit records")
    return records


def write_visits_jsonl(path: str | Path,
                       records: list[tuple[str, list[str], list[int]]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for vid, codes, labels in records:
            fh.write(json.dumps({"visit_id": vid, "codes": list(codes),
                                 "labels": list(labels)}) + "\n")


def read_descriptions_csv(path: str | Path) -> dict[str, str]:
    """Two-column CSV (code, description) with a header row."""
    out: dict[str, str] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty descriptions file")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise DataError(f"{path}:{lineno}: expected 2 columns, got {len(row)}")
            out[row[0]] = row[1]
    return out


def write_descriptions_csv(path: str | Path, descriptions: dict[str, str]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["code", "description"])
        for code in sorted(descriptions):
            writer.writerow([code, descriptions[code]])
