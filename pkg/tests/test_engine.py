"""Tensor engine: forward semantics and finite-difference backward checks."""

import math

import numpy as np
import pytest

from hgclust import engine as en
from hgclust.engine import Tape, Tensor, no_grad, record_onto
from hgclust.errors import NumericsError


def fd_check(build, params, eps=1e-6, tol=1e-4):
    """Compare taped gradients of build(params) against central differences."""
    for p in params:
        p.zero_grad()
    tape = Tape()
    with record_onto(tape):
        loss = build()
    tape.backward(loss)
    grads = [p.grad.copy() if p.grad is not None else np.zeros_like(p.data)
             for p in params]
    for p, g in zip(params, grads):
        flat = p.data.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            with no_grad():
                fp = build().item()
            flat[i] = orig - eps
            with no_grad():
                fm = build().item()
            flat[i] = orig
            fd = (fp - fm) / (2 * eps)
            rel = abs(fd - gflat[i]) / max(abs(fd), abs(gflat[i]), 1.0)
            assert rel < tol, f"coordinate {i}: analytic {gflat[i]}, fd {fd}"


def weighted_sum(t: Tensor, seed: int = 0) -> Tensor:
    w = Tensor(np.random.Generator(np.random.PCG64(seed)).normal(size=t.shape))
    return en.tsum(en.mul(t, w))


# -- softmax ---------------------------------------------------------------

def test_softmax_symmetry():
    out = en.softmax(Tensor([0.0, 0.0])).data
    assert np.allclose(out, [0.5, 0.5], atol=1e-15)


def test_softmax_exp_normalize():
    # oracle: direct exp-normalize of [ln 1, ln 3]
    v = np.array([math.log(1.0), math.log(3.0)])
    expected = np.exp(v) / np.exp(v).sum()
    out = en.softmax(Tensor(v)).data
    assert np.allclose(out, expected, atol=1e-15)
    assert np.allclose(out, [0.25, 0.75], atol=1e-12)


def test_softmax_singleton():
    assert en.softmax(Tensor([5.0])).data == pytest.approx([1.0])


def test_softmax_rejects_nan():
    with pytest.raises(NumericsError):
        en.softmax(Tensor([0.0, float("nan")]))


def test_softmax_sums_to_one():
    g = np.random.Generator(np.random.PCG64(11))
    for _ in range(200):
        v = g.normal(scale=50.0, size=g.integers(1, 20))
        out = en.softmax(Tensor(v)).data
        assert abs(out.sum() - 1.0) < 1e-12
        assert (out >= 0).all()


def test_softmax_permutation_equivariant():
    g = np.random.Generator(np.random.PCG64(5))
    v = g.normal(size=9)
    perm = g.permutation(9)
    a = en.softmax(Tensor(v)).data[perm]
    b = en.softmax(Tensor(v[perm])).data
    assert np.allclose(a, b, atol=1e-15)


# -- layer norm ------------------------------------------------------------

def test_layer_norm_two_point():
    # mean 2, population variance 1
    out = en.layer_norm(Tensor([1.0, 3.0]), Tensor(np.ones(2)), Tensor(np.zeros(2)))
    assert np.allclose(out.data, [-1.0, 1.0], atol=1e-4)


def test_layer_norm_constant_input_gives_bias():
    out = en.layer_norm(Tensor([4.0, 4.0, 4.0]), Tensor(np.ones(3)),
                        Tensor(np.full(3, 2.5)))
    assert np.allclose(out.data, 2.5, atol=1e-9)


def test_layer_norm_shift_invariant():
    g = np.random.Generator(np.random.PCG64(2))
    v = g.normal(size=8)
    gain, bias = Tensor(g.normal(size=8)), Tensor(g.normal(size=8))
    a = en.layer_norm(Tensor(v), gain, bias).data
    b = en.layer_norm(Tensor(v + 13.7), gain, bias).data
    assert np.allclose(a, b, atol=1e-10)


def test_layer_norm_length_mismatch():
    with pytest.raises(NumericsError):
        en.layer_norm(Tensor([1.0, 2.0]), Tensor([1.0]), Tensor([0.0]))


# -- primitive backward sweeps ----------------------------------------------

def _rand(shape, seed):
    return np.random.Generator(np.random.PCG64(seed)).normal(size=shape)


@pytest.mark.parametrize("name,builder", [
    ("add", lambda a, b: en.add(a, b)),
    ("sub", lambda a, b: en.sub(a, b)),
    ("mul", lambda a, b: en.mul(a, b)),
    ("div", lambda a, b: en.div(a, en.add(en.mul(b, b), 1.0))),
    ("matmul", lambda a, b: en.matmul(a, en.transpose(b))),
])
def test_binary_primitives_backward(name, builder):
    a = Tensor(_rand((4, 5), 1), requires_grad=True)
    b = Tensor(_rand((4, 5), 2), requires_grad=True)
    fd_check(lambda: weighted_sum(builder(a, b)), [a, b])


def test_broadcast_add_and_mul_backward():
    a = Tensor(_rand((4, 5), 3), requires_grad=True)
    row = Tensor(_rand(5, 4), requires_grad=True)
    col = Tensor(_rand((4, 1), 5), requires_grad=True)
    fd_check(lambda: weighted_sum(en.mul(en.add(a, row), col)), [a, row, col])


@pytest.mark.parametrize("name,unary", [
    ("neg", en.neg),
    ("relu", en.relu),
    ("sigmoid", en.sigmoid),
    ("exp", en.exp),
    ("softmax_rows", en.softmax),
    ("reshape", lambda t: en.reshape(t, (5, 4))),
    ("transpose", en.transpose),
    ("sum_all", en.tsum),
    ("sum_axis0", lambda t: en.tsum(t, axis=0)),
    ("sum_axis1_keep", lambda t: en.tsum(t, axis=1, keepdims=True)),
    ("mean_all", en.tmean),
    ("mean_axis1", lambda t: en.tmean(t, axis=1)),
])
def test_unary_primitives_backward(name, unary):
    a = Tensor(_rand((4, 5), 7) + 0.05, requires_grad=True)  # keep relu off 0
    fd_check(lambda: weighted_sum(en.as_tensor(unary(a))), [a])


def test_log_sqrt_clip_backward():
    a = Tensor(np.abs(_rand((3, 4), 8)) + 0.5, requires_grad=True)
    fd_check(lambda: weighted_sum(en.log(a)), [a])
    fd_check(lambda: weighted_sum(en.sqrt(a)), [a])
    fd_check(lambda: weighted_sum(en.clip(a, 0.0, 100.0)), [a])


def test_concat_backward():
    a = Tensor(_rand((3, 2), 9), requires_grad=True)
    b = Tensor(_rand((3, 4), 10), requires_grad=True)
    fd_check(lambda: weighted_sum(en.concat([a, b], axis=1)), [a, b])


def test_gather_scatter_backward():
    a = Tensor(_rand((5, 3), 11), requires_grad=True)
    idx = np.array([0, 2, 2, 4, 1])  # duplicates exercise accumulation
    fd_check(lambda: weighted_sum(en.gather_rows(a, idx)), [a])
    b = Tensor(_rand((3, 2), 12), requires_grad=True)
    fd_check(lambda: weighted_sum(en.scatter_rows(b, np.array([4, 0, 2]), 6)), [b])


def test_segment_ops_backward():
    a = Tensor(_rand((7, 3), 13), requires_grad=True)
    starts = np.array([0, 2, 5])
    fd_check(lambda: weighted_sum(en.segment_sum(a, starts)), [a])
    fd_check(lambda: weighted_sum(en.segment_softmax(a, starts)), [a])


def test_layer_norm_backward():
    a = Tensor(_rand((4, 6), 14), requires_grad=True)
    gain = Tensor(np.abs(_rand(6, 15)) + 0.5, requires_grad=True)
    bias = Tensor(_rand(6, 16), requires_grad=True)
    fd_check(lambda: weighted_sum(en.layer_norm(a, gain, bias)), [a, gain, bias])


def test_batch_norm_backward_both_modes():
    a = Tensor(_rand((5, 4), 17), requires_grad=True)
    gain = Tensor(np.abs(_rand(4, 18)) + 0.5, requires_grad=True)
    bias = Tensor(_rand(4, 19), requires_grad=True)
    rm, rv = np.zeros(4), np.ones(4)

    def train_mode():
        rm_local, rv_local = rm.copy(), rv.copy()  # keep stats frozen for FD
        return weighted_sum(en.batch_norm(a, gain, bias, rm_local, rv_local,
                                          training=True))

    fd_check(train_mode, [a, gain, bias])
    fd_check(lambda: weighted_sum(en.batch_norm(a, gain, bias, rm, rv,
                                                training=False)),
             [a, gain, bias])


# -- segment forward semantics ----------------------------------------------

def test_segment_softmax_matches_per_segment_softmax():
    a = _rand((6, 2), 20)
    starts = np.array([0, 2, 3])
    out = en.segment_softmax(Tensor(a), starts).data
    for lo, hi in ((0, 2), (2, 3), (3, 6)):
        for c in range(2):
            expected = np.exp(a[lo:hi, c] - a[lo:hi, c].max())
            expected /= expected.sum()
            assert np.allclose(out[lo:hi, c], expected, atol=1e-12)


# -- tape semantics ----------------------------------------------------------

def test_gradients_bitwise_reproducible():
    def run():
        g = np.random.Generator(np.random.PCG64(33))
        a = Tensor(g.normal(size=(6, 6)), requires_grad=True)
        b = Tensor(g.normal(size=(6, 6)), requires_grad=True)
        tape = Tape()
        with record_onto(tape):
            loss = en.tsum(en.sigmoid(en.matmul(a, en.relu(b))))
        tape.backward(loss)
        return a.grad.copy(), b.grad.copy()

    (a1, b1), (a2, b2) = run(), run()
    assert np.array_equal(a1, a2) and np.array_equal(b1, b2)


def test_backward_populates_each_grad_once_per_call():
    a = Tensor([2.0], requires_grad=True)
    tape = Tape()
    with record_onto(tape):
        loss = en.mul(a, a)
    tape.backward(loss)
    assert np.allclose(a.grad, [4.0])  # exactly d(a^2)/da, not a multiple
    first = a.grad.copy()
    a.zero_grad()
    loss.zero_grad()
    tape.backward(loss)  # zeroed replay reproduces the same gradients
    assert np.array_equal(a.grad, first)


def test_no_recording_outside_tape():
    a = Tensor([1.0], requires_grad=True)
    tape = Tape()
    with record_onto(tape):
        en.mul(a, a)
    n = len(tape)
    with no_grad():
        en.mul(a, a)
    assert len(tape) == n


def test_check_finite_flag():
    en.CHECK_FINITE = True
    try:
        with np.errstate(invalid="ignore"), pytest.raises(NumericsError):
            en.log(Tensor([-1.0]))
    finally:
        en.CHECK_FINITE = False
