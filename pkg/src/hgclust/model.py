"""Attention message-passing transformer over the visit hypergraph.

Each layer runs two set-aggregation steps: every hyperedge attends over
its member nodes, then every node attends over its incident hyperedges.
Aggregation uses one-query multi-head attention: the query is a learned
seed vector per head (no projection of the members into query space), so
the attended output is a weighted mean of value projections and the
residual branch adds the plain mean of the member set. No positional
encoding anywhere; the blocks are permutation invariant by construction.

The per-layer hyperedge embeddings are concatenated and fed to a 2-layer
MLP head with a sigmoid per label slot.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import engine as en
from .engine import Tensor
from .errors import DataError, NumericsError
from .hypergraph import Hypergraph

BCE_EPS = 1e-12


@dataclass
class TransformerConfig:
    layers: int = 3
    heads: int = 4
    hidden: int = 48
    ffn_hidden: int = 48
    head_hidden: int = 48
    dropout: float = 0.0
    input_dim: int = 0
    label_width: int = 1

    def validate(self) -> None:
        if self.layers < 1:
            raise DataError("transformer: layers must be >= 1")
        if self.hidden % self.heads != 0:
            raise DataError(
                f"transformer: hidden ({self.hidden}) not divisible by heads ({self.heads})")
        if self.input_dim < 1 or self.label_width < 1:
            raise DataError("transformer: input_dim and label_width must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise DataError("transformer: dropout must lie in [0, 1)")


@dataclass
class IncidenceCache:
    """Flattened incidence arrays shared by every forward pass."""
    member_nodes: np.ndarray
    edge_starts: np.ndarray
    edge_inv_counts: np.ndarray      # (n_edges, 1)
    incident_edges: np.ndarray
    node_starts: np.ndarray
    node_inv_counts: np.ndarray      # (n_active, 1)
    active_nodes: np.ndarray
    n_nodes: int
    n_edges: int


def build_incidence(g: Hypergraph) -> IncidenceCache:
    member_nodes, edge_starts, incident, node_starts, active = g.flat_incidence()
    edge_counts = np.diff(np.append(edge_starts, len(member_nodes)))
    node_counts = np.diff(np.append(node_starts, len(incident)))
    return IncidenceCache(
        member_nodes=member_nodes, edge_starts=edge_starts,
        edge_inv_counts=(1.0 / edge_counts)[:, None],
        incident_edges=incident, node_starts=node_starts,
        node_inv_counts=(1.0 / node_counts)[:, None] if len(active) else np.zeros((0, 1)),
        active_nodes=active, n_nodes=g.n_nodes, n_edges=g.n_edges)


class ModelState:
    """All backbone parameters plus the constant head-block matrices."""

    def __init__(self, config: TransformerConfig, seed: int):
        config.validate()
        self.config = config
        self.params: dict[str, Tensor] = {}
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(
            entropy=seed, spawn_key=(0,))))
        d, h = config.hidden, config.heads
        dh = d // h

        def glorot(fan_in, fan_out):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            return rng.uniform(-limit, limit, size=(fan_in, fan_out))

        def param(name, data):
            self.params[name] = Tensor(data, requires_grad=True)

        param("input.w", glorot(config.input_dim, d))
        param("input.b", np.zeros(d))
        for layer in range(1, config.layers + 1):
            for direction in ("v2e", "e2v"):
                p = f"l{layer}.{direction}"
                param(f"{p}.wk", glorot(d, d))
                param(f"{p}.wv", glorot(d, d))
                param(f"{p}.q", rng.uniform(-1.0, 1.0, size=d) / np.sqrt(d))
                param(f"{p}.ln1.g", np.ones(d))
                param(f"{p}.ln1.b", np.zeros(d))
                param(f"{p}.ffn.w1", glorot(d, config.ffn_hidden))
                param(f"{p}.ffn.b1", np.zeros(config.ffn_hidden))
                param(f"{p}.ffn.w2", glorot(config.ffn_hidden, d))
                param(f"{p}.ffn.b2", np.zeros(d))
                param(f"{p}.ln2.g", np.ones(d))
                param(f"{p}.ln2.b", np.zeros(d))
        param("head.w1", glorot(config.layers * d, config.head_hidden))
        param("head.b1", np.zeros(config.head_hidden))
        param("head.w2", glorot(config.head_hidden, config.label_width))
        param("head.b2", np.zeros(config.label_width))

        # Constant block-indicator matrices mapping packed head layout
        # (T, d) <-> per-head scalars (T, h).
        blocks = np.zeros((d, h))
        for i in range(h):
            blocks[i * dh:(i + 1) * dh, i] = 1.0
        self.head_blocks = Tensor(blocks)
        self.head_blocks_t = Tensor(blocks.T)
        self.attn_scale = 1.0 / np.sqrt(dh)
        self._dropout_rng = np.random.Generator(np.random.PCG64(
            np.random.SeedSequence(entropy=seed, spawn_key=(1,))))

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.params.items()}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for name, p in self.params.items():
            if name not in arrays:
                raise DataError(f"checkpoint missing parameter '{name}'")
            if arrays[name].shape != p.data.shape:
                raise DataError(f"checkpoint shape mismatch for '{name}'")
            p.data = arrays[name].astype(np.float64).copy()
            p.grad = None


@dataclass
class ForwardResult:
    probs: Tensor                     # (n_edges, label_width)
    node_embeddings: Tensor           # X^(L), (n_nodes, hidden)
    edge_embeddings: Tensor           # E^(L), (n_edges, hidden)
    edge_layers: list = field(default_factory=list)
    node_layers: list = field(default_factory=list)
    attention: np.ndarray | None = None   # final-layer V->E weights per membership


def _set_block(state: ModelState, prefix: str, members: Tensor,
               starts: np.ndarray, inv_counts: np.ndarray,
               training: bool) -> tuple[Tensor, Tensor]:
    """One seed-query attention block over contiguous member segments.

    Returns (block output (n_segments, d), attention weights (T, heads)).
    """
    p = state.params
    cfg = state.config
    keys = en.matmul(members, p[f"{prefix}.wk"])
    values = en.matmul(members, p[f"{prefix}.wv"])
    logits = en.mul(en.matmul(en.mul(keys, p[f"{prefix}.q"]), state.head_blocks),
                    state.attn_scale)
    attn = en.segment_softmax(logits, starts)
    ctx = en.segment_sum(en.mul(values, en.matmul(attn, state.head_blocks_t)), starts)
    if training and cfg.dropout > 0.0:
        ctx = en.dropout(ctx, cfg.dropout, state._dropout_rng)
    pooled = en.mul(en.segment_sum(members, starts), Tensor(inv_counts))
    y = en.layer_norm(en.add(pooled, ctx), p[f"{prefix}.ln1.g"], p[f"{prefix}.ln1.b"])
    hidden = en.relu(en.add(en.matmul(y, p[f"{prefix}.ffn.w1"]), p[f"{prefix}.ffn.b1"]))
    if training and cfg.dropout > 0.0:
        hidden = en.dropout(hidden, cfg.dropout, state._dropout_rng)
    ffn = en.add(en.matmul(hidden, p[f"{prefix}.ffn.w2"]), p[f"{prefix}.ffn.b2"])
    out = en.layer_norm(en.add(y, ffn), p[f"{prefix}.ln2.g"], p[f"{prefix}.ln2.b"])
    return out, attn


def scaled_attention(members, q, wk, wv, heads: int) -> Tensor:
    """Seed-query multi-head attention over one member set.

    Per head: softmax(q_i (S W_i^K)^T / sqrt(d/h)) S W_i^V, heads
    concatenated. An empty set aggregates to zeros.
    """
    members = en.as_tensor(members)
    q, wk, wv = en.as_tensor(q), en.as_tensor(wk), en.as_tensor(wv)
    d = wk.shape[1]
    if members.shape[0] == 0:
        return Tensor(np.zeros(d))
    dh = d // heads
    blocks = np.zeros((d, heads))
    for i in range(heads):
        blocks[i * dh:(i + 1) * dh, i] = 1.0
    starts = np.zeros(1, dtype=np.intp)
    keys = en.matmul(members, wk)
    values = en.matmul(members, wv)
    logits = en.mul(en.matmul(en.mul(keys, q), Tensor(blocks)), 1.0 / np.sqrt(dh))
    attn = en.segment_softmax(logits, starts)
    ctx = en.segment_sum(en.mul(values, en.matmul(attn, Tensor(blocks.T))), starts)
    return en.reshape(ctx, (d,))


def self_att_block(state: ModelState, prefix: str, members) -> Tensor:
    """Full set-to-vector block (attention + pooled residual + FFN)."""
    members = en.as_tensor(members)
    d = state.config.hidden
    if members.shape[0] == 0:
        return Tensor(np.zeros(d))
    starts = np.zeros(1, dtype=np.intp)
    inv = np.array([[1.0 / members.shape[0]]])
    out, _ = _set_block(state, prefix, members, starts, inv, training=False)
    return en.reshape(out, (d,))


def forward(state: ModelState, inc: IncidenceCache, features: np.ndarray,
            training: bool = False, want_attention: bool = False) -> ForwardResult:
    """Full-graph forward pass from raw features to per-edge probabilities."""
    cfg = state.config
    p = state.params
    x = en.add(en.matmul(Tensor(features), p["input.w"]), p["input.b"])
    edge_layers: list[Tensor] = []
    node_layers: list[Tensor] = []
    attention = None
    for layer in range(1, cfg.layers + 1):
        members = en.gather_rows(x, inc.member_nodes)
        e, attn = _set_block(state, f"l{layer}.v2e", members,
                             inc.edge_starts, inc.edge_inv_counts, training)
        if want_attention and layer == cfg.layers:
            attention = attn.data.mean(axis=1)
        edge_layers.append(e)
        incident = en.gather_rows(e, inc.incident_edges)
        x_active, _ = _set_block(state, f"l{layer}.e2v", incident,
                                 inc.node_starts, inc.node_inv_counts, training)
        # Nodes without incident hyperedges receive a zero update.
        x = en.scatter_rows(x_active, inc.active_nodes, inc.n_nodes)
        node_layers.append(x)

    h = en.concat(edge_layers, axis=1)
    hidden = en.relu(en.add(en.matmul(h, p["head.w1"]), p["head.b1"]))
    logits = en.add(en.matmul(hidden, p["head.w2"]), p["head.b2"])
    probs = en.sigmoid(logits)
    return ForwardResult(probs=probs, node_embeddings=x,
                         edge_embeddings=edge_layers[-1],
                         edge_layers=edge_layers, node_layers=node_layers,
                         attention=attention)


def bce_loss(y_hat: Tensor, y: np.ndarray) -> Tensor:
    """Mean binary cross-entropy over items and label slots."""
    y = np.asarray(y, dtype=np.float64)
    if y.shape != y_hat.shape:
        raise DataError(f"bce: shape mismatch {y.shape} vs {y_hat.shape}")
    if not np.all((y == 0.0) | (y == 1.0)):
        raise DataError("bce: labels must be 0 or 1")
    p = en.clip(y_hat, BCE_EPS, 1.0 - BCE_EPS)
    terms = en.add(en.mul(Tensor(y), en.log(p)),
                   en.mul(Tensor(1.0 - y), en.log(en.sub(1.0, p))))
    return en.neg(en.tmean(terms))


# -- checkpoints -----------------------------------------------------------

CHECKPOINT_VERSION = 1


def save_checkpoint(path: str | Path, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    """Versioned npz container: JSON metadata + named float64 arrays."""
    payload = {"p/" + k: np.ascontiguousarray(v, dtype=np.float64)
               for k, v in arrays.items()}
    payload["__meta__"] = np.array(json.dumps(
        {"version": CHECKPOINT_VERSION, **meta}, sort_keys=True))
    np.savez(path, **payload)


def load_checkpoint(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    with np.load(path, allow_pickle=False) as data:
        if "__meta__" not in data:
            raise DataError(f"{path}: not a model checkpoint")
        meta = json.loads(str(data["__meta__"]))
        if meta.get("version") != CHECKPOINT_VERSION:
            raise DataError(f"{path}: unsupported checkpoint version {meta.get('version')}")
        arrays = {k[2:]: data[k] for k in data.files if k.startswith("p/")}
    return meta, arrays


def config_to_dict(config: TransformerConfig) -> dict:
    return asdict(config)


def config_from_dict(d: dict) -> TransformerConfig:
    cfg = TransformerConfig(**d)
    cfg.validate()
    return cfg
