"""End-to-end orchestration: data ingestion, feature preparation,
training, evaluation and report generation over a run directory.

Run directory layout:
    config.txt            flat config snapshot
    run.json              data path, seed, backend, best-epoch summary
    history.csv           per-epoch loss components and validation AUROC
    features.npz          frozen input features (vocab + matrix)
    split.json            train/val/test hyperedge indices
    checkpoint_best.npz   best-validation parameters (+ clustering state)
    checkpoint_final.npz  final-epoch parameters
    assignments_*.csv     soft assignments per domain
    alignment_report.csv  anchor/positive distances and hinge terms
    projections.csv       2-D PCA coordinates per item
    eval_<split>.json     EvalReport; per_slot_<split>.csv breakdown
    report.json           cluster case-study report (report command)
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from . import skipgram
from .alignment import distance_matrix
from .clustering import soft_assign_np
from .config import RunSettings, load_config, settings_to_text
from .engine import no_grad
from .errors import DataError, UsageError
from .features import (FeatureTable, concat_features, fallback_text_embeddings,
                       load_text_embeddings, zero_text_embeddings)
from .hypergraph import (Hypergraph, build_hypergraph, random_walks,
                         read_descriptions_csv, read_visits_jsonl)
from .metrics import EvalReport, evaluate_predictions, silhouette
from .model import (ModelState, TransformerConfig, build_incidence,
                    config_from_dict, config_to_dict, forward,
                    load_checkpoint, save_checkpoint)
from .reports import (build_cluster_report, write_alignment_csv,
                      write_assignments_csv, write_projections_csv)
from .training import (HISTORY_FIELDS, CoClusterBundle, SplitIndex, TrainConfig,
                       derived_seed, select_embeddings, split_dataset, train,
                       train_config_from_dict, train_config_to_dict)


def load_dataset(data_dir: str | Path):
    data_dir = Path(data_dir)
    visits = data_dir / "visits.jsonl"
    if not visits.exists():
        raise DataError(f"{visits}: missing visits file")
    records = read_visits_jsonl(visits)
    g = build_hypergraph(records)
    desc_path = data_dir / "descriptions.csv"
    descriptions = read_descriptions_csv(desc_path) if desc_path.exists() else {}
    return g, descriptions


def prepare_features(g: Hypergraph, data_dir: Path, settings: RunSettings,
                     split: SplitIndex | None = None) -> FeatureTable:
    emb = settings.embedding
    seed = settings.train.seed
    edge_subset = split.train if (emb.walk_edges == "train" and split) else None
    corpus = random_walks(g, emb.walk_length, emb.walks_per_node,
                          derived_seed(seed, 10), edge_subset=edge_subset)
    structural = skipgram.train_skipgram(
        corpus, g.node_ids, emb.d_structural, emb.window, emb.negatives,
        emb.sg_epochs, emb.sg_lr, derived_seed(seed, 11))

    desc_path = data_dir / "descriptions.csv"
    descriptions = read_descriptions_csv(desc_path) if desc_path.exists() else {}
    vec_path = data_dir / "text_vectors.jsonl"
    mode = emb.text_mode
    if mode == "auto":
        mode = "file" if vec_path.exists() else "fallback"
    if mode == "file":
        if not vec_path.exists():
            raise DataError(f"{vec_path}: text_mode=file but no vector file")
        textual = load_text_embeddings(vec_path, g.node_ids, descriptions,
                                       d_t=emb.text_dim)
    elif mode == "fallback":
        textual = fallback_text_embeddings(g.node_ids, descriptions, emb.text_dim)
    else:
        textual = zero_text_embeddings(g.node_ids, emb.text_dim)
    return concat_features(structural, textual)


def _write_history_csv(path: Path, history: list[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=HISTORY_FIELDS)
        writer.writeheader()
        for row in history:
            writer.writerow({k: (f"{v:.12g}" if isinstance(v, float) else v)
                             for k, v in row.items()})


def _checkpoint_meta(settings: RunSettings, g: Hypergraph,
                     arrays: dict) -> dict:
    return {"transformer": config_to_dict(settings.transformer),
            "train": train_config_to_dict(settings.train),
            "n_nodes": g.n_nodes, "n_edges": g.n_edges,
            "label_width": g.label_width,
            "has_bundle": "centroids.nodes" in arrays}


def run_training(data_dir: str | Path, settings: RunSettings,
                 rundir: str | Path, log_fn=None) -> dict:
    data_dir = Path(data_dir)
    rundir = Path(rundir)
    rundir.mkdir(parents=True, exist_ok=True)

    g, descriptions = load_dataset(data_dir)
    settings.transformer.input_dim = (settings.embedding.d_structural
                                      + settings.embedding.text_dim)
    settings.transformer.label_width = g.label_width
    settings.transformer.validate()

    # The split is fixed before feature preparation so inductive walk
    # corpora (walk_edges=train) can honor it.
    split = split_dataset(g.n_edges, (settings.train.train_frac,
                                      settings.train.val_frac,
                                      settings.train.test_frac),
                          settings.train.seed)
    features = prepare_features(g, data_dir, settings, split)
    if features.matrix.shape[1] != settings.transformer.input_dim:
        raise DataError("feature width does not match configured input_dim")

    model = ModelState(settings.transformer, derived_seed(settings.train.seed, 12))
    result = train(g, features.matrix, model, settings.train, log_fn=log_fn)

    save_checkpoint(rundir / "checkpoint_final.npz",
                    {**_checkpoint_meta(settings, g, result.final_arrays),
                     "epoch": settings.train.epochs}, result.final_arrays)
    save_checkpoint(rundir / "checkpoint_best.npz",
                    {**_checkpoint_meta(settings, g, result.best_arrays),
                     "epoch": result.best_epoch,
                     "val_auroc": result.best_val_auroc}, result.best_arrays)
    _write_history_csv(rundir / "history.csv", result.history)
    np.savez(rundir / "features.npz", matrix=features.matrix,
             vocab=np.array(features.vocabulary),
             d_structural=features.d_structural, d_text=features.d_text)
    with open(rundir / "split.json", "w", encoding="utf-8") as fh:
        json.dump({"train": result.split.train.tolist(),
                   "val": result.split.val.tolist(),
                   "test": result.split.test.tolist(),
                   "seed": settings.train.seed}, fh)
    (rundir / "config.txt").write_text(settings_to_text(settings),
                                       encoding="utf-8")
    with open(rundir / "run.json", "w", encoding="utf-8") as fh:
        json.dump({"data_dir": str(data_dir.resolve()),
                   "seed": settings.train.seed,
                   "sgns_backend": skipgram.BACKEND,
                   "best_epoch": result.best_epoch,
                   "best_val_auroc": result.best_val_auroc,
                   "n_nodes": g.n_nodes, "n_edges": g.n_edges}, fh,
                  indent=2, sort_keys=True)

    # Cluster exports and the final test report come from the best state.
    report = evaluate_run(rundir, "test")
    _export_cluster_artifacts(rundir)
    return {"best_epoch": result.best_epoch,
            "best_val_auroc": result.best_val_auroc,
            "test_report": report}


class LoadedRun:
    """Best-checkpoint state rebuilt from a run directory."""

    def __init__(self, rundir: str | Path, checkpoint: str = "checkpoint_best.npz"):
        self.rundir = Path(rundir)
        if not self.rundir.exists():
            raise UsageError(f"run directory {rundir} does not exist")
        run_json = self.rundir / "run.json"
        if not run_json.exists():
            raise DataError(f"{run_json}: missing run metadata")
        self.run_meta = json.loads(run_json.read_text(encoding="utf-8"))
        self.meta, arrays = load_checkpoint(self.rundir / checkpoint)
        self.tconfig: TransformerConfig = config_from_dict(self.meta["transformer"])
        self.tcfg: TrainConfig = train_config_from_dict(self.meta["train"])

        data_dir = Path(self.run_meta["data_dir"])
        self.graph, self.descriptions = load_dataset(data_dir)
        if (self.graph.n_nodes != self.meta["n_nodes"]
                or self.graph.n_edges != self.meta["n_edges"]):
            raise DataError("data directory no longer matches the checkpoint")

        with np.load(self.rundir / "features.npz", allow_pickle=False) as feats:
            self.features = feats["matrix"]
        split = json.loads((self.rundir / "split.json").read_text(encoding="utf-8"))
        self.split = SplitIndex(train=np.asarray(split["train"], dtype=np.intp),
                                val=np.asarray(split["val"], dtype=np.intp),
                                test=np.asarray(split["test"], dtype=np.intp),
                                seed=split["seed"])

        self.model = ModelState(self.tconfig, seed=0)
        self.model.load_arrays(arrays)
        self.bundle: CoClusterBundle | None = None
        if self.meta.get("has_bundle"):
            self.bundle = CoClusterBundle(
                self.tcfg.k, self.tconfig.hidden, self.tcfg.margin, 0,
                arrays["centroids.nodes"], arrays["centroids.edges"])
            self.bundle.load_arrays(arrays)
        self.incidence = build_incidence(self.graph)

    def forward(self, want_attention: bool = False):
        with no_grad():
            return forward(self.model, self.incidence, self.features,
                           training=False, want_attention=want_attention)

    def cluster_assignments(self, result=None):
        """Soft assignments per domain from the loaded centroids."""
        if self.bundle is None:
            raise DataError("run has no clustering state (warm-up only?)")
        res = result or self.forward()
        x_emb, e_emb = select_embeddings(res, self.tcfg.cluster_layer)
        q_nodes = soft_assign_np(x_emb.data, self.bundle.nodes.centroids.data)
        q_edges = soft_assign_np(e_emb.data, self.bundle.edges.centroids.data)
        return q_nodes, q_edges, x_emb.data, e_emb.data


def evaluate_run(rundir: str | Path, split_name: str) -> EvalReport:
    """Prediction metrics from the best checkpoint; cluster silhouettes
    from the final one (clusters are read post-training, the best
    checkpoint may predate the clustering phase)."""
    run = LoadedRun(rundir)
    res = run.forward()
    idx = run.split.by_name(split_name)
    sil_nodes = sil_edges = None
    cluster_run = run if run.bundle is not None else None
    if cluster_run is None:
        final = LoadedRun(rundir, "checkpoint_final.npz")
        cluster_run = final if final.bundle is not None else None
    if cluster_run is not None:
        q_nodes, q_edges, x_emb, e_emb = cluster_run.cluster_assignments(
            res if cluster_run is run else None)
        try:
            sil_nodes = silhouette(x_emb, q_nodes.argmax(axis=1))
            sil_edges = silhouette(e_emb, q_edges.argmax(axis=1))
        except DataError:
            pass  # degenerate argmax (single occupied cluster)
    report = evaluate_predictions(
        res.probs.data[idx], run.graph.labels[idx],
        silhouette_nodes=sil_nodes, silhouette_hyperedges=sil_edges,
        per_slot_csv=Path(rundir) / f"per_slot_{split_name}.csv")
    (Path(rundir) / f"eval_{split_name}.json").write_text(
        report.to_json() + "\n", encoding="utf-8")
    return report


def _export_cluster_artifacts(rundir: str | Path) -> None:
    run = LoadedRun(rundir, "checkpoint_final.npz")
    if run.bundle is None:
        return
    res = run.forward()
    q_nodes, q_edges, x_emb, e_emb = run.cluster_assignments(res)
    rundir = Path(rundir)
    write_assignments_csv(rundir / "assignments_nodes.csv",
                          run.graph.node_ids, "node", q_nodes)
    write_assignments_csv(rundir / "assignments_hyperedges.csv",
                          run.graph.edge_ids, "hyperedge", q_edges)
    write_projections_csv(rundir / "projections.csv",
                          run.graph.node_ids, x_emb, q_nodes.argmax(axis=1),
                          run.graph.edge_ids, e_emb, q_edges.argmax(axis=1))
    from .alignment import soft_centroids
    from .engine import Tensor
    with no_grad():
        c_v = soft_centroids(Tensor(x_emb), Tensor(q_nodes))
        c_e = soft_centroids(Tensor(e_emb), Tensor(q_edges))
        z_v = run.bundle.proj_nodes(c_v, training=False)
        z_e = run.bundle.proj_edges(c_e, training=False)
        d = distance_matrix(z_v, z_e).data
    write_alignment_csv(rundir / "alignment_report.csv", d, d.argmin(axis=1),
                        run.tcfg.margin)


def report_run(rundir: str | Path, top_concepts: int, top_visits: int) -> dict:
    run = LoadedRun(rundir, "checkpoint_final.npz")
    if run.bundle is None:
        raise DataError("run has no clustering state; train with clustering first")
    res = run.forward(want_attention=True)
    q_nodes, q_edges, _, _ = run.cluster_assignments(res)
    report = build_cluster_report(run.graph, run.incidence, q_nodes, q_edges,
                                  res.attention, run.descriptions,
                                  n_top_concepts=top_concepts,
                                  m_top_visits=top_visits)
    (Path(rundir) / "report.json").write_text(report.to_json() + "\n",
                                              encoding="utf-8")
    return json.loads(report.to_json())


def aggregate_runs(run_dirs: list[str | Path]) -> dict:
    """Mean and standard deviation of each metric over completed runs."""
    reports = []
    for rd in run_dirs:
        path = Path(rd) / "eval_test.json"
        if not path.exists():
            raise DataError(f"{path}: missing test report")
        reports.append(json.loads(path.read_text(encoding="utf-8")))
    if not reports:
        raise DataError("no run directories matched")
    out = {"n_runs": len(reports)}
    for key in ("accuracy", "auroc", "aupr", "macro_f1",
                "silhouette_nodes", "silhouette_hyperedges"):
        values = [r[key] for r in reports if r.get(key) is not None]
        if values:
            out[key] = {"mean": float(np.mean(values)),
                        "std": float(np.std(values)),
                        "n": len(values)}
    return out
