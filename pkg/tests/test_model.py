"""Hypergraph transformer: attention blocks, message passing, prediction."""

import numpy as np
import pytest

from hgclust import engine as en
from hgclust.engine import Tape, Tensor, no_grad, record_onto
from hgclust.errors import DataError
from hgclust.gradcheck import grad_check
from hgclust.hypergraph import build_hypergraph
from hgclust.model import (ModelState, TransformerConfig, bce_loss,
                           build_incidence, forward, load_checkpoint,
                           save_checkpoint, scaled_attention, self_att_block)
from hgclust.optim import Adam


def small_model(seed=1, layers=2, d=8, heads=2, input_dim=5, labels=2):
    cfg = TransformerConfig(layers=layers, heads=heads, hidden=d, ffn_hidden=d,
                            head_hidden=6, input_dim=input_dim, label_width=labels)
    return ModelState(cfg, seed)


def rand(shape, seed=0):
    return np.random.Generator(np.random.PCG64(seed)).normal(size=shape)


# -- scaled attention ---------------------------------------------------------

def test_singleton_set_passes_value_projection():
    d, h = 8, 2
    q, wk, wv = rand(d, 1), rand((d, d), 2), rand((d, d), 3)
    s = rand((1, d), 4)
    out = scaled_attention(s, q, wk, wv, h)
    assert np.allclose(out.data, (s @ wv)[0], atol=1e-12)


def test_zero_query_gives_mean_of_values():
    d, h = 8, 2
    wk, wv = rand((d, d), 2), rand((d, d), 3)
    s = rand((5, d), 4)
    out = scaled_attention(s, np.zeros(d), wk, wv, h)
    assert np.allclose(out.data, (s @ wv).mean(axis=0), atol=1e-12)


def test_attention_permutation_invariant():
    d, h = 8, 4
    q, wk, wv = rand(d, 5), rand((d, d), 6), rand((d, d), 7)
    s = rand((6, d), 8)
    perm = np.random.Generator(np.random.PCG64(9)).permutation(6)
    a = scaled_attention(s, q, wk, wv, h).data
    b = scaled_attention(s[perm], q, wk, wv, h).data
    assert np.allclose(a, b, atol=1e-12)


def test_empty_set_aggregates_to_zeros():
    d = 8
    out = scaled_attention(np.zeros((0, d)), rand(d, 1), rand((d, d), 2),
                           rand((d, d), 3), 2)
    assert out.shape == (d,) and not out.data.any()
    model = small_model()
    block = self_att_block(model, "l1.v2e", np.zeros((0, model.config.hidden)))
    assert block.shape == (model.config.hidden,) and not block.data.any()


# -- full block ---------------------------------------------------------------

def test_block_output_width_constant():
    model = small_model()
    d = model.config.hidden
    for n in (1, 3, 7):
        out = self_att_block(model, "l1.v2e", rand((n, d), n))
        assert out.shape == (d,)


def test_block_invariant_to_duplicating_members():
    model = small_model()
    d = model.config.hidden
    s = rand((4, d), 10)
    a = self_att_block(model, "l2.e2v", s).data
    b = self_att_block(model, "l2.e2v", np.vstack([s, s])).data
    assert np.allclose(a, b, atol=1e-10)


def test_block_matches_batched_path():
    # the standalone block must agree with the segment-batched forward
    model = small_model()
    d = model.config.hidden
    sets = [rand((3, d), 20), rand((5, d), 21), rand((2, d), 22)]
    stacked = np.vstack(sets)
    starts = np.array([0, 3, 8])
    inv = np.array([[1 / 3], [1 / 5], [1 / 2]])
    from hgclust.model import _set_block
    batched, _ = _set_block(model, "l1.v2e", Tensor(stacked), starts, inv,
                            training=False)
    for i, s in enumerate(sets):
        single = self_att_block(model, "l1.v2e", s)
        assert np.allclose(single.data, batched.data[i], atol=1e-12)


# -- message passing ----------------------------------------------------------

def graph_pair():
    return build_hypergraph([
        ("v0", ["a", "b"], [1]),
        ("v1", ["c", "d", "e"], [0]),
    ])


def test_disconnected_components_independent():
    g = graph_pair()
    inc = build_incidence(g)
    model = small_model(input_dim=4, labels=1)
    feats = rand((g.n_nodes, 4), 30)
    with no_grad():
        base = forward(model, inc, feats)
    perturbed = feats.copy()
    c_idx = g.node_ids.index("c")
    perturbed[c_idx] += 5.0
    with no_grad():
        moved = forward(model, inc, perturbed)
    # edge v0 and nodes a,b never see the perturbation
    assert np.array_equal(base.edge_embeddings.data[0], moved.edge_embeddings.data[0])
    a_idx = g.node_ids.index("a")
    assert np.array_equal(base.node_embeddings.data[a_idx],
                          moved.node_embeddings.data[a_idx])
    assert not np.array_equal(base.edge_embeddings.data[1],
                              moved.edge_embeddings.data[1])


def test_predict_head_width_is_layers_times_hidden():
    cfg = TransformerConfig(layers=3, heads=4, hidden=48, ffn_hidden=48,
                            head_hidden=48, input_dim=10, label_width=25)
    model = ModelState(cfg, 0)
    assert model.params["head.w1"].shape == (144, 48)  # 3 * 48 concatenated


def test_zero_head_gives_half_probability():
    g = graph_pair()
    inc = build_incidence(g)
    model = small_model(input_dim=4, labels=3)
    model.params["head.w2"].data[:] = 0.0
    model.params["head.b2"].data[:] = 0.0
    with no_grad():
        res = forward(model, inc, rand((g.n_nodes, 4), 31))
    assert np.allclose(res.probs.data, 0.5, atol=1e-15)


def test_probabilities_monotone_in_head_bias():
    g = graph_pair()
    inc = build_incidence(g)
    model = small_model(input_dim=4, labels=2)
    feats = rand((g.n_nodes, 4), 32)
    with no_grad():
        before = forward(model, inc, feats).probs.data
    model.params["head.b2"].data[:] += 1.0
    with no_grad():
        after = forward(model, inc, feats).probs.data
    assert (after > before).all()


def test_predict_outputs_in_open_interval():
    g = graph_pair()
    inc = build_incidence(g)
    model = small_model(input_dim=4, labels=2)
    with no_grad():
        probs = forward(model, inc, rand((g.n_nodes, 4), 33)).probs.data
    assert ((probs > 0) & (probs < 1)).all()


def test_permutation_invariance_of_predictions():
    rng = np.random.Generator(np.random.PCG64(40))
    records = [(f"v{e}", [f"c{c}" for c in rng.choice(12, size=rng.integers(2, 6),
                                                      replace=False)], [0, 1])
               for e in range(8)]
    g = build_hypergraph(records)
    model = small_model(input_dim=6, labels=2)
    feats = rand((g.n_nodes, 6), 41)
    with no_grad():
        base = forward(model, build_incidence(g), feats).probs.data
    for trial in range(5):
        perm = rng.permutation(len(records))
        shuffled = []
        for e in perm:
            vid, codes, labels = records[e]
            codes = list(codes)
            rng.shuffle(codes)
            shuffled.append((vid, codes, labels))
        g2 = build_hypergraph(shuffled)
        assert g2.node_ids == g.node_ids  # sorted vocabulary is stable
        with no_grad():
            out = forward(model, build_incidence(g2), feats).probs.data
        assert np.abs(out - base[perm]).max() < 1e-10


# -- losses -------------------------------------------------------------------

def test_bce_closed_forms():
    assert bce_loss(Tensor([[0.5]]), np.array([[1.0]])).item() == pytest.approx(np.log(2))
    assert bce_loss(Tensor([[0.5, 0.5]]), np.array([[1.0, 0.0]])).item() == \
        pytest.approx(np.log(2))
    assert bce_loss(Tensor([[1.0 - 1e-15]]), np.array([[1.0]])).item() < 1e-10


def test_bce_rejects_nonbinary_labels():
    with pytest.raises(DataError):
        bce_loss(Tensor([[0.5]]), np.array([[0.3]]))


def test_end_to_end_gradient_matches_fd():
    g = build_hypergraph([
        ("v0", ["a", "b", "c"], [1]),
        ("v1", ["c", "d"], [0]),
        ("v2", ["d", "e", "f"], [1]),
    ])
    inc = build_incidence(g)
    model = small_model(seed=3, layers=2, input_dim=4, labels=1)
    feats = rand((g.n_nodes, 4), 50)

    def loss_fn():
        return bce_loss(forward(model, inc, feats).probs, g.labels)

    report = grad_check(loss_fn, model.params)
    assert report.passed, report.summary()


def test_warmup_halves_training_bce():
    # linearly separable instance: subtype pools decide the label
    rng = np.random.Generator(np.random.PCG64(60))
    records = []
    for e in range(30):
        pool = (0, 5) if e % 2 == 0 else (5, 10)
        codes = rng.choice(np.arange(*pool), size=3, replace=False)
        records.append((f"v{e}", [f"c{c}" for c in codes], [e % 2]))
    g = build_hypergraph(records)
    inc = build_incidence(g)
    model = small_model(seed=4, input_dim=6, labels=1)
    feats = rand((g.n_nodes, 6), 61)
    opt = Adam(model.params, lr=5e-3)
    losses = []
    for _ in range(100):
        tape = Tape()
        with record_onto(tape):
            loss = bce_loss(forward(model, inc, feats, training=True).probs,
                            g.labels)
        losses.append(loss.item())
        tape.backward(loss)
        opt.step()
    assert losses[-1] <= 0.5 * losses[0]


def test_dropout_changes_training_forward_only():
    g = graph_pair()
    inc = build_incidence(g)
    cfg = TransformerConfig(layers=1, heads=2, hidden=8, ffn_hidden=8,
                            head_hidden=4, input_dim=4, label_width=1,
                            dropout=0.5)
    model = ModelState(cfg, 5)
    feats = rand((g.n_nodes, 4), 70)
    with no_grad():
        t1 = forward(model, inc, feats, training=True).probs.data
        t2 = forward(model, inc, feats, training=True).probs.data
        e1 = forward(model, inc, feats, training=False).probs.data
        e2 = forward(model, inc, feats, training=False).probs.data
    assert not np.array_equal(t1, t2)  # fresh masks per call
    assert np.array_equal(e1, e2)


# -- checkpoints --------------------------------------------------------------

def test_checkpoint_bit_exact_roundtrip(tmp_path):
    model = small_model(seed=9)
    arrays = model.state_arrays()
    path = tmp_path / "ckpt.npz"
    save_checkpoint(path, {"note": "test"}, arrays)
    meta, loaded = load_checkpoint(path)
    assert meta["note"] == "test" and meta["version"] == 1
    assert set(loaded) == set(arrays)
    for k in arrays:
        assert np.array_equal(arrays[k], loaded[k])

    other = small_model(seed=10)
    other.load_arrays(loaded)
    for k, p in model.params.items():
        assert np.array_equal(p.data, other.params[k].data)


def test_checkpoint_rejects_foreign_files(tmp_path):
    path = tmp_path / "x.npz"
    np.savez(path, a=np.zeros(3))
    with pytest.raises(DataError):
        load_checkpoint(path)


def test_config_validation():
    with pytest.raises(DataError):
        TransformerConfig(layers=0, input_dim=4, label_width=1).validate()
    with pytest.raises(DataError):
        TransformerConfig(hidden=10, heads=4, input_dim=4, label_width=1).validate()
