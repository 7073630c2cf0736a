"""Prediction and clustering metrics.

All metrics are computed from first principles: AUROC in its
Mann-Whitney form (ties count one half), AUPR as average precision via
an explicit rank walk, macro-F1/accuracy per label slot at threshold
0.5, and the silhouette coefficient as the exhaustive O(n^2) computation
(it deliberately IS the reference; no sampling or approximation). For
multi-label tasks each metric is computed per slot and unweighted
averaged, with undefined slots excluded and counted.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import DataError

THRESHOLD = 0.5  # scores >= THRESHOLD predict the positive class


def _average_ranks(scores: np.ndarray) -> np.ndarray:
    """1-based ranks with ties sharing their average rank."""
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(len(scores), dtype=np.float64)
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and scores[order[j + 1]] == scores[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def auroc(scores, labels) -> float | None:
    """P(random positive outranks random negative); ties count one half.

    Returns None when only one class is present.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = labels == 1
    n1 = int(pos.sum())
    n0 = len(labels) - n1
    if n1 == 0 or n0 == 0:
        return None
    ranks = _average_ranks(scores)
    u = ranks[pos].sum() - n1 * (n1 + 1) / 2.0
    return u / (n1 * n0)


def aupr(scores, labels) -> float | None:
    """Average precision: mean of precision-at-rank over the positives.

    Descending-score order with ties broken by original index. Returns
    None when there are no positives.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    n1 = int((labels == 1).sum())
    if n1 == 0:
        return None
    order = np.argsort(-scores, kind="stable")
    total = 0.0
    tp = 0
    for rank, idx in enumerate(order, start=1):
        if labels[idx] == 1:
            tp += 1
            total += tp / rank
    return total / n1


def accuracy(predictions, labels) -> float:
    """Mean exact slot-match rate over all (item, slot) pairs."""
    pred = np.asarray(predictions, dtype=np.float64) >= THRESHOLD
    y = np.asarray(labels) == 1
    if pred.shape != y.shape:
        raise DataError(f"accuracy: shape mismatch {pred.shape} vs {y.shape}")
    return float((pred == y).mean())


def _binary_f1(pred: np.ndarray, y: np.ndarray) -> float:
    tp = int(np.sum(pred & y))
    fp = int(np.sum(pred & ~y))
    fn = int(np.sum(~pred & y))
    if tp == 0:
        return 0.0
    return 2.0 * tp / (2.0 * tp + fp + fn)


def macro_f1(predictions, labels) -> float:
    """Unweighted mean of per-slot positive-class F1 (0 when tp == 0)."""
    pred = np.atleast_2d(np.asarray(predictions, dtype=np.float64) >= THRESHOLD)
    y = np.atleast_2d(np.asarray(labels) == 1)
    if pred.shape != y.shape:
        raise DataError(f"macro_f1: shape mismatch {pred.shape} vs {y.shape}")
    return float(np.mean([_binary_f1(pred[:, s], y[:, s]) for s in range(y.shape[1])]))


def silhouette(points, assignments) -> float:
    """Mean silhouette coefficient with Euclidean distance, exhaustive O(n^2).

    a(i) is the mean distance to the rest of i's cluster, b(i) the
    smallest mean distance to another cluster. Singleton clusters and
    degenerate points (a = b = 0) score 0 by convention.
    """
    x = np.asarray(points, dtype=np.float64)
    assign = np.asarray(assignments)
    clusters, inverse = np.unique(assign, return_inverse=True)
    k = len(clusters)
    if k < 2:
        raise DataError("silhouette requires at least two clusters")
    n = x.shape[0]
    counts = np.bincount(inverse, minlength=k).tolist()
    inv = inverse.tolist()

    # Per-cluster sums accumulate sequentially in item order so the result
    # is reproducible against a naive loop reference.
    total = 0.0
    for i in range(n):
        dists = np.sqrt(((x - x[i]) ** 2).sum(axis=1)).tolist()
        own = inv[i]
        if counts[own] == 1:
            continue  # s(i) = 0 for singletons
        sums = [0.0] * k
        for j in range(n):
            sums[inv[j]] += dists[j]
        a = sums[own] / (counts[own] - 1)
        b = min(sums[c] / counts[c] for c in range(k) if c != own)
        denom = max(a, b)
        if denom > 0.0:
            total += (b - a) / denom
    return total / n


def adjusted_rand_index(labels_a, labels_b) -> float:
    """Chance-corrected agreement between two partitions of the same items."""
    a = np.asarray(labels_a)
    b = np.asarray(labels_b)
    if a.shape != b.shape:
        raise DataError("ARI: partitions must cover the same items")
    cats_a, ia = np.unique(a, return_inverse=True)
    cats_b, ib = np.unique(b, return_inverse=True)
    table = np.zeros((len(cats_a), len(cats_b)), dtype=np.int64)
    np.add.at(table, (ia, ib), 1)

    def comb2(v):
        return v * (v - 1) // 2

    sum_ij = int(comb2(table).sum())
    sum_a = int(comb2(table.sum(axis=1)).sum())
    sum_b = int(comb2(table.sum(axis=0)).sum())
    total = comb2(len(a))
    expected = sum_a * sum_b / total if total else 0.0
    max_index = (sum_a + sum_b) / 2.0
    if max_index == expected:
        return 1.0
    return (sum_ij - expected) / (max_index - expected)


@dataclass
class EvalReport:
    accuracy: float
    auroc: float | None
    aupr: float | None
    macro_f1: float
    silhouette_nodes: float | None
    silhouette_hyperedges: float | None
    n_items: int
    n_slots: int
    slots_with_auroc: int
    slots_with_aupr: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        return cls(**json.loads(text))


def evaluate_predictions(probs: np.ndarray, labels: np.ndarray,
                         silhouette_nodes: float | None = None,
                         silhouette_hyperedges: float | None = None,
                         per_slot_csv: str | Path | None = None) -> EvalReport:
    """Per-slot metrics, unweighted-averaged over slots where defined."""
    probs = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    labels = np.atleast_2d(np.asarray(labels))
    if probs.shape != labels.shape:
        raise DataError(f"evaluate: shape mismatch {probs.shape} vs {labels.shape}")
    n_items, n_slots = probs.shape

    rows = []
    aurocs, auprs = [], []
    for s in range(n_slots):
        roc = auroc(probs[:, s], labels[:, s])
        pr = aupr(probs[:, s], labels[:, s])
        if roc is not None:
            aurocs.append(roc)
        if pr is not None:
            auprs.append(pr)
        rows.append({"slot": s,
                     "auroc": "" if roc is None else f"{roc:.10g}",
                     "aupr": "" if pr is None else f"{pr:.10g}",
                     "f1": f"{_binary_f1(probs[:, s] >= THRESHOLD, labels[:, s] == 1):.10g}",
                     "positives": int((labels[:, s] == 1).sum())})
    if per_slot_csv is not None:
        with open(per_slot_csv, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
            writer.writeheader()
            writer.writerows(rows)

    return EvalReport(
        accuracy=accuracy(probs, labels),
        auroc=float(np.mean(aurocs)) if aurocs else None,
        aupr=float(np.mean(auprs)) if auprs else None,
        macro_f1=macro_f1(probs, labels),
        silhouette_nodes=silhouette_nodes,
        silhouette_hyperedges=silhouette_hyperedges,
        n_items=n_items, n_slots=n_slots,
        slots_with_auroc=len(aurocs), slots_with_aupr=len(auprs))
