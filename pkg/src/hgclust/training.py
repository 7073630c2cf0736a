"""Two-phase joint training: backbone warm-up, then the combined objective
``L = L_cls + alpha * (L_nodes + L_edges) + beta * L_align``.

Cluster centroids and projection heads come to life at the end of the
warm-up, seeded with k-means on the embeddings of that moment, and are
trained by their own Adam instance alongside the backbone's. The target
distributions refresh once per epoch from the current assignments.
Classification uses training-split labels only; the clustering and
alignment terms are label-free and span the whole population. Training is
full-batch by default (the datasets are desk scale and the assignment
matrices are population objects); ``batch_size`` > 0 mini-batches the
classification term only.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import engine as en
from .alignment import ProjectionHead, soft_centroids, triplet_align_loss
from .clustering import (ClusterState, kl_cluster_loss, kmeans_init,
                         soft_assign, target_distribution)
from .engine import Tape, Tensor, no_grad, record_onto
from .errors import DataError, NumericsError
from .hypergraph import Hypergraph
from .model import IncidenceCache, ModelState, bce_loss, build_incidence, forward
from .metrics import auroc
from .optim import Adam

HISTORY_FIELDS = ["epoch", "loss_cls", "loss_kl_nodes", "loss_kl_edges",
                  "loss_align", "refresh_kl_nodes", "refresh_kl_edges",
                  "loss_total", "val_auroc"]


@dataclass
class TrainConfig:
    alpha: float = 10.0
    beta: float = 0.1
    k: int = 5
    margin: float = 1.0
    lr: float = 1e-3
    epochs: int = 130
    warmup_epochs: int = 100
    seed: int = 0
    train_frac: float = 0.7
    val_frac: float = 0.1
    test_frac: float = 0.2
    batch_size: int = 0              # 0 = full batch
    clustering_enabled: bool = True
    cluster_layer: int = -1          # -1 = final layer

    def validate(self) -> None:
        if self.alpha < 0 or self.beta < 0:
            raise DataError("alpha and beta must be nonnegative")
        if self.k < 2:
            raise DataError("k must be >= 2")
        if self.margin <= 0:
            raise DataError("margin must be positive")
        fr = (self.train_frac, self.val_frac, self.test_frac)
        if any(f <= 0 for f in fr) or abs(sum(fr) - 1.0) > 1e-9:
            raise DataError("split fractions must be positive and sum to 1")
        if not 0 <= self.warmup_epochs <= self.epochs:
            raise DataError("warmup_epochs must lie in [0, epochs]")
        if self.batch_size < 0:
            raise DataError("batch_size must be >= 0")


@dataclass
class SplitIndex:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    seed: int

    def by_name(self, name: str) -> np.ndarray:
        try:
            return {"train": self.train, "val": self.val, "test": self.test}[name]
        except KeyError:
            raise DataError(f"unknown split '{name}'")


def derived_seed(seed: int, stream: int) -> int:
    """Stable per-purpose child seed; streams never collide."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(stream,))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def split_dataset(items, fractions, seed: int) -> SplitIndex:
    """Seeded permutation cut into contiguous slices.

    Slice sizes follow the largest-remainder rule, so each differs from
    its exact fractional size by less than one item.
    """
    n = items.n_edges if isinstance(items, Hypergraph) else int(items)
    if n < 3:
        raise DataError("need at least 3 items to split")
    fr = np.asarray(fractions, dtype=np.float64)
    if fr.ndim != 1 or len(fr) != 3 or np.any(fr <= 0):
        raise DataError("fractions must be 3 positive numbers")
    if abs(fr.sum() - 1.0) > 1e-9:
        raise DataError("fractions must sum to 1")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(
        entropy=seed, spawn_key=(6,))))
    perm = rng.permutation(n)
    exact = fr * n
    sizes = np.floor(exact).astype(int)
    remainders = exact - sizes
    for i in np.argsort(-remainders, kind="stable")[: n - sizes.sum()]:
        sizes[i] += 1
    a, b = sizes[0], sizes[0] + sizes[1]
    return SplitIndex(train=perm[:a], val=perm[a:b], test=perm[b:], seed=seed)


def total_loss(cls, l_v, l_e, align, alpha: float, beta: float) -> Tensor:
    """Weighted sum of the objective; zero-weight terms are skipped so an
    alpha = beta = 0 run is bitwise the pure-backbone run."""
    total = en.as_tensor(cls)
    if alpha != 0.0:
        total = en.add(total, en.mul(alpha, en.add(l_v, l_e)))
    if beta != 0.0:
        total = en.add(total, en.mul(beta, align))
    return total


class CoClusterBundle:
    """Trainable clustering + alignment state for both domains."""

    def __init__(self, k: int, dim: int, margin: float, seed: int,
                 node_centroids: np.ndarray, edge_centroids: np.ndarray):
        self.k = k
        self.margin = margin
        self.nodes = ClusterState(domain="node", k=k,
                                  centroids=Tensor(node_centroids, requires_grad=True))
        self.edges = ClusterState(domain="hyperedge", k=k,
                                  centroids=Tensor(edge_centroids, requires_grad=True))
        self.proj_nodes = ProjectionHead(dim, dim, seed, "proj.nodes", stream=0)
        self.proj_edges = ProjectionHead(dim, dim, seed, "proj.edges", stream=1)
        self.last_pairing: np.ndarray | None = None

    @classmethod
    def initialize(cls, node_emb: np.ndarray, edge_emb: np.ndarray,
                   k: int, margin: float, seed: int) -> "CoClusterBundle":
        u_nodes = kmeans_init(node_emb, k, derived_seed(seed, 2))
        u_edges = kmeans_init(edge_emb, k, derived_seed(seed, 3))
        return cls(k, node_emb.shape[1], margin, derived_seed(seed, 4),
                   u_nodes, u_edges)

    def params(self) -> dict[str, Tensor]:
        out = {"centroids.nodes": self.nodes.centroids,
               "centroids.edges": self.edges.centroids}
        out.update(self.proj_nodes.params)
        out.update(self.proj_edges.params)
        return out

    def arrays(self) -> dict[str, np.ndarray]:
        out = {name: p.data.copy() for name, p in self.params().items()}
        for head in (self.proj_nodes, self.proj_edges):
            out.update({k: v.copy() for k, v in head.buffers().items()})
        return out

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for name, p in self.params().items():
            p.data = arrays[name].astype(np.float64).copy()
            p.grad = None
        for head in (self.proj_nodes, self.proj_edges):
            for k in head.buffers():
                buf = head.running_mean if k.endswith(".rm") else head.running_var
                buf[:] = arrays[k]


@dataclass
class TrainResult:
    history: list[dict] = field(default_factory=list)
    best_epoch: int = -1
    best_val_auroc: float = float("nan")
    best_arrays: dict[str, np.ndarray] | None = None
    final_arrays: dict[str, np.ndarray] | None = None
    bundle: CoClusterBundle | None = None
    split: SplitIndex | None = None


def _kl_np(p: np.ndarray, q: np.ndarray) -> float:
    ratio = np.where(p > 0.0, p / q, 1.0)
    return float(np.where(p > 0.0, p * np.log(ratio), 0.0).sum())


def _component_value(name: str, tensor: Tensor, epoch: int) -> float:
    value = tensor.item()
    if not np.isfinite(value):
        raise NumericsError(f"epoch {epoch}: non-finite {name} loss")
    return value


def _macro_val_auroc(probs: np.ndarray, labels: np.ndarray, idx: np.ndarray) -> float:
    vals = [auroc(probs[idx, s], labels[idx, s]) for s in range(labels.shape[1])]
    vals = [v for v in vals if v is not None]
    return float(np.mean(vals)) if vals else float("nan")


def _collect_arrays(model: ModelState, bundle: CoClusterBundle | None) -> dict[str, np.ndarray]:
    arrays = model.state_arrays()
    if bundle is not None:
        arrays.update(bundle.arrays())
    return arrays


def select_embeddings(result, layer: int):
    if layer == -1:
        return result.node_embeddings, result.edge_embeddings
    if not 1 <= layer <= len(result.edge_layers):
        raise DataError(f"cluster_layer {layer} out of range")
    return result.node_layers[layer - 1], result.edge_layers[layer - 1]


def train(g: Hypergraph, features: np.ndarray, model: ModelState,
          cfg: TrainConfig, log_fn=None) -> TrainResult:
    """Run the full schedule and keep the best-validation checkpoint."""
    cfg.validate()
    if features.shape[0] != g.n_nodes:
        raise DataError("feature row count != node count")
    inc = build_incidence(g)
    split = split_dataset(g.n_edges, (cfg.train_frac, cfg.val_frac, cfg.test_frac),
                          cfg.seed)
    if len(split.train) == 0:
        raise DataError("empty training split")
    labels = g.labels
    backbone_opt = Adam(model.params, cfg.lr)
    cluster_opt: Adam | None = None
    bundle: CoClusterBundle | None = None
    use_dec = cfg.alpha != 0.0
    use_align = cfg.beta != 0.0
    batch_rng = (np.random.Generator(np.random.PCG64(np.random.SeedSequence(
        entropy=cfg.seed, spawn_key=(9,)))) if cfg.batch_size > 0 else None)

    result = TrainResult(split=split)
    best_val = -np.inf

    for epoch in range(1, cfg.epochs + 1):
        phase2 = cfg.clustering_enabled and epoch > cfg.warmup_epochs
        if cfg.batch_size > 0:
            order = batch_rng.permutation(split.train)
            batches = [order[i:i + cfg.batch_size]
                       for i in range(0, len(order), cfg.batch_size)]
        else:
            batches = [split.train]

        epoch_row = dict.fromkeys(HISTORY_FIELDS, 0.0)
        epoch_row["epoch"] = epoch
        for step, batch in enumerate(batches):
            tape = Tape()
            with record_onto(tape):
                res = forward(model, inc, features, training=True)
                cls = bce_loss(en.gather_rows(res.probs, batch), labels[batch])
                l_v = l_e = align = None
                if phase2:
                    x_emb, e_emb = select_embeddings(res, cfg.cluster_layer)
                    if bundle is None:
                        bundle = CoClusterBundle.initialize(
                            x_emb.data, e_emb.data, cfg.k, cfg.margin, cfg.seed)
                        cluster_opt = Adam(bundle.params(), cfg.lr)
                        result.bundle = bundle
                    if use_dec or use_align:
                        q_v = soft_assign(x_emb, bundle.nodes.centroids)
                        q_e = soft_assign(e_emb, bundle.edges.centroids)
                        bundle.nodes.q = q_v.data.copy()
                        bundle.edges.q = q_e.data.copy()
                    if use_dec:
                        if step == 0:  # target refresh once per epoch
                            bundle.nodes.p = target_distribution(q_v.data)
                            bundle.edges.p = target_distribution(q_e.data)
                            bundle.nodes.last_refresh = epoch
                            bundle.edges.last_refresh = epoch
                            epoch_row["refresh_kl_nodes"] = _kl_np(bundle.nodes.p, q_v.data)
                            epoch_row["refresh_kl_edges"] = _kl_np(bundle.edges.p, q_e.data)
                        l_v = kl_cluster_loss(bundle.nodes.p, q_v)
                        l_e = kl_cluster_loss(bundle.edges.p, q_e)
                    if use_align:
                        c_v = soft_centroids(x_emb, q_v)
                        c_e = soft_centroids(e_emb, q_e)
                        z_v = bundle.proj_nodes(c_v, training=True)
                        z_e = bundle.proj_edges(c_e, training=True)
                        align, pairing = triplet_align_loss(z_v, z_e, cfg.margin)
                        bundle.last_pairing = pairing
                total = total_loss(cls, l_v, l_e, align,
                                   cfg.alpha if l_v is not None else 0.0,
                                   cfg.beta if align is not None else 0.0)

            epoch_row["loss_cls"] += _component_value("classification", cls, epoch) / len(batches)
            if l_v is not None:
                epoch_row["loss_kl_nodes"] += _component_value("node KL", l_v, epoch) / len(batches)
                epoch_row["loss_kl_edges"] += _component_value("hyperedge KL", l_e, epoch) / len(batches)
            if align is not None:
                epoch_row["loss_align"] += _component_value("alignment", align, epoch) / len(batches)
            epoch_row["loss_total"] += _component_value("total", total, epoch) / len(batches)

            tape.backward(total)
            backbone_opt.step()
            if phase2 and (use_dec or use_align):
                cluster_opt.step()

        # Validation reflects the post-step parameters, i.e. exactly the
        # state a checkpoint of this epoch would reload.
        with no_grad():
            probs = forward(model, inc, features, training=False).probs.data
        val = _macro_val_auroc(probs, labels, split.val)
        epoch_row["val_auroc"] = val
        result.history.append(epoch_row)
        if log_fn is not None:
            log_fn(epoch_row)

        if np.isfinite(val) and val > best_val:
            best_val = val
            result.best_epoch = epoch
            result.best_val_auroc = val
            result.best_arrays = _collect_arrays(model, bundle)

    result.final_arrays = _collect_arrays(model, bundle)
    if result.best_arrays is None:
        result.best_epoch = cfg.epochs
        result.best_val_auroc = float("nan")
        result.best_arrays = result.final_arrays
    return result


def train_config_to_dict(cfg: TrainConfig) -> dict:
    return asdict(cfg)


def train_config_from_dict(d: dict) -> TrainConfig:
    cfg = TrainConfig(**d)
    cfg.validate()
    return cfg
