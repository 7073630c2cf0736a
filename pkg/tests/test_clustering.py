"""Deep embedded clustering: k-means init, soft assignment, targets, KL."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hgclust import engine as en
from hgclust.clustering import (ClusterState, kl_cluster_loss, kmeans_init,
                                soft_assign, target_distribution)
from hgclust.engine import Tensor, no_grad
from hgclust.errors import DataError, NumericsError
from hgclust.gradcheck import grad_check


# -- k-means -------------------------------------------------------------

def test_two_cluster_optimum():
    x = np.array([[0.0], [0.0], [10.0], [10.0]])
    centroids = kmeans_init(x, 2, seed=0)
    assert sorted(centroids.ravel().tolist()) == [0.0, 10.0]


def test_k_equals_distinct_points():
    x = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 0.0], [1.0, 1.0]])
    centroids = kmeans_init(x, 3, seed=1)
    # zero inertia: every point sits on a centroid
    d = ((x[:, None, :] - centroids[None]) ** 2).sum(2).min(1)
    assert np.allclose(d, 0.0)


def test_fewer_distinct_points_than_k():
    with pytest.raises(DataError):
        kmeans_init(np.zeros((5, 2)), 2, seed=0)


def test_kmeans_deterministic():
    x = np.random.Generator(np.random.PCG64(2)).normal(size=(40, 3))
    a = kmeans_init(x, 5, seed=7)
    b = kmeans_init(x, 5, seed=7)
    assert np.array_equal(a, b)


# -- soft assignment -------------------------------------------------------

def test_equidistant_gives_half():
    q = soft_assign(np.array([[1.0, 0.0]]),
                    np.array([[0.0, 0.0], [2.0, 0.0]]))
    assert np.allclose(q.data, [[0.5, 0.5]], atol=1e-15)


def test_student_t_kernel_values():
    # centroids (0,0) and (2,0) with x=(0,0): kernels 1 and 1/5
    q = soft_assign(np.array([[0.0, 0.0]]),
                    np.array([[0.0, 0.0], [2.0, 0.0]]))
    assert np.allclose(q.data, [[5 / 6, 1 / 6]], atol=1e-12)


def test_on_centroid_dominant_but_below_one():
    q = soft_assign(np.array([[0.0, 0.0]]),
                    np.array([[0.0, 0.0], [100.0, 0.0]])).data
    assert q[0, 0] > 0.99 and q[0, 0] < 1.0


@given(st.integers(0, 2 ** 31 - 1))
@settings(max_examples=60, deadline=None)
def test_rows_sum_to_one(seed):
    rng = np.random.Generator(np.random.PCG64(seed))
    n, k, d = int(rng.integers(1, 30)), int(rng.integers(2, 6)), int(rng.integers(1, 8))
    q = soft_assign(rng.normal(scale=3.0, size=(n, d)),
                    rng.normal(scale=3.0, size=(k, d))).data
    assert np.abs(q.sum(axis=1) - 1.0).max() < 1e-12
    assert (q > 0).all()


# -- target distribution -----------------------------------------------------

def test_uniform_q_gives_uniform_p():
    q = np.full((6, 3), 1 / 3)
    assert np.allclose(target_distribution(q), 1 / 3, atol=1e-15)


def test_target_distribution_worked_example():
    q = np.array([[0.9, 0.1], [0.6, 0.4]])
    f = q.sum(axis=0)
    weighted = q ** 2 / f
    expected = weighted / weighted.sum(axis=1, keepdims=True)
    p = target_distribution(q)
    assert np.allclose(p, expected, atol=1e-15)
    assert np.allclose(p, [[0.96428571, 0.03571429], [0.42857143, 0.57142857]],
                       atol=1e-7)


def test_one_hot_rows_fixed():
    q = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]])
    assert np.allclose(target_distribution(q), q, atol=1e-15)


def test_empty_cluster_column_contributes_zero():
    q = np.array([[1.0, 0.0], [1.0, 0.0]])
    p = target_distribution(q)
    assert np.allclose(p[:, 1], 0.0)


def test_degenerate_rows_rejected():
    with pytest.raises(NumericsError):
        target_distribution(np.zeros((2, 2)))


def test_argmax_preserved_under_equal_masses():
    # equal cluster masses: sharpening cannot move a row's argmax
    rng = np.random.Generator(np.random.PCG64(3))
    for _ in range(50):
        row = rng.dirichlet(np.ones(3))
        q = np.vstack([row, row[::-1], np.full(3, 1 / 3)])
        q = np.vstack([q, q[:, [1, 2, 0]]])  # balance the column sums roughly
        f = q.sum(axis=0)
        if np.abs(f - f.mean()).max() > 1e-9:
            q = q / f * f.mean()
            q = q / q.sum(axis=1, keepdims=True)
        p = target_distribution(q)
        f = q.sum(axis=0)
        if np.abs(f - f.mean()).max() < 1e-9:
            assert (p.argmax(axis=1) == q.argmax(axis=1)).all()


# -- KL loss ------------------------------------------------------------------

def test_kl_zero_when_equal():
    q = soft_assign(np.array([[0.3, 0.1], [2.0, -1.0]]),
                    np.array([[0.0, 0.0], [1.0, 1.0]]))
    assert abs(kl_cluster_loss(q.data.copy(), q).item()) < 1e-12


def test_kl_closed_form():
    q = Tensor(np.array([[0.5, 0.5]]))
    p = np.array([[1.0, 0.0]])
    assert kl_cluster_loss(p, q).item() == pytest.approx(np.log(2))


@given(st.integers(0, 2 ** 31 - 1))
@settings(max_examples=60, deadline=None)
def test_kl_nonnegative(seed):
    rng = np.random.Generator(np.random.PCG64(seed))
    n, k = int(rng.integers(1, 20)), int(rng.integers(2, 5))
    q = rng.dirichlet(np.ones(k), size=n) + 1e-12
    q /= q.sum(axis=1, keepdims=True)
    p = rng.dirichlet(np.ones(k), size=n)
    assert kl_cluster_loss(p, Tensor(q)).item() >= -1e-12


def test_kl_gradient_matches_fd():
    rng = np.random.Generator(np.random.PCG64(4))
    x = Tensor(rng.normal(size=(7, 3)), requires_grad=True)
    u = Tensor(rng.normal(size=(3, 3)), requires_grad=True)
    with no_grad():
        p = target_distribution(soft_assign(x, u).data)
    report = grad_check(lambda: kl_cluster_loss(p, soft_assign(x, u)),
                        {"x": x, "u": u})
    assert report.passed, report.summary()


def test_cluster_state_requires_k_at_least_two():
    with pytest.raises(DataError):
        ClusterState(domain="node", k=1, centroids=Tensor(np.zeros((1, 2))))


def test_domains_keep_independent_states():
    a = ClusterState(domain="node", k=3, centroids=Tensor(np.zeros((3, 2))))
    b = ClusterState(domain="hyperedge", k=3, centroids=Tensor(np.ones((3, 2))))
    a.centroids.data[:] = 5.0
    assert not np.array_equal(a.centroids.data, b.centroids.data)
    assert a.k == b.k
