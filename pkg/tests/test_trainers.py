import threading

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stabcp.data import Dataset
from stabcp.models import huber_dz, init_mlp, huber_loss
from stabcp.trainers import (
    BaggingConfig,
    BaseLearnerSpec,
    ConvergenceError,
    FitCounter,
    RlmConfig,
    SgdConfig,
    epoch_order,
    fit_bagging,
    fit_rlm,
    fit_sgd,
    fit_sgd_coupled_loo,
    fit_tree,
    rlm_objective,
)


def _data(n=30, d=4, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d)) / np.sqrt(d)
    y = X @ rng.normal(size=d) + 0.3 * rng.normal(size=n)
    return Dataset(X, y)


def test_fit_counter_is_thread_safe():
    c = FitCounter()

    def work():
        for _ in range(2000):
            c.increment()

    ts = [threading.Thread(target=work) for _ in range(8)]
    for t in ts:
        t.start()
    for t in ts:
        t.join()
    assert c.count == 16000
    c.reset()
    assert c.count == 0


def test_rlm_matches_ridge_when_huber_is_quadratic():
    data = _data()
    omega = 0.3
    theta = fit_rlm(data, RlmConfig(omega_weight=omega, grad_tol=1e-12), epsilon=1e6).theta
    n, d = data.X.shape
    ridge = np.linalg.solve(data.X.T @ data.X / n + 2 * omega * np.eye(d), data.X.T @ data.y / n)
    np.testing.assert_allclose(theta, ridge, atol=1e-10)


def test_rlm_with_penalty_matrix():
    data = _data(n=15, d=3, seed=4)
    P = np.array([[2.0, 0.5, 0.0], [0.5, 1.0, 0.0], [0.0, 0.0, 3.0]])
    theta = fit_rlm(data, RlmConfig(omega_weight=0.5, grad_tol=1e-12), 1e6, penalty=P).theta
    n = data.n
    expect = np.linalg.solve(data.X.T @ data.X / n + P, data.X.T @ data.y / n)
    np.testing.assert_allclose(theta, expect, atol=1e-10)


def test_rlm_is_a_minimiser_of_the_huber_objective():
    data = _data(seed=2)
    data.y[:3] += 10.0  # outliers land on the linear part of the loss
    theta = fit_rlm(data, RlmConfig(omega_weight=0.1), epsilon=0.5).theta
    f0 = rlm_objective(theta, data.X, data.y, 0.1, 0.5)
    rng = np.random.default_rng(0)
    for _ in range(50):
        assert rlm_objective(theta + 1e-3 * rng.normal(size=theta.size), data.X, data.y, 0.1, 0.5) >= f0


def test_rlm_convergence_error():
    with pytest.raises(ConvergenceError) as info:
        fit_rlm(_data(), RlmConfig(max_iters=1), 1.0)
    assert info.value.grad_norm > 0


def test_epoch_order_is_a_permutation():
    order = epoch_order(3, 0, 50)
    assert sorted(order) == list(range(50))
    assert not np.array_equal(order, epoch_order(3, 1, 50))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31), st.integers(0, 30), st.integers(1, 60))
def test_epoch_order_drops_the_last_index_cleanly(seed, epoch, n):
    longer = epoch_order(seed, epoch, n + 1)
    np.testing.assert_array_equal(longer[longer != n], epoch_order(seed, epoch, n))


def _reference_sgd(X, y, epochs, eta, eps, seed):
    theta = np.zeros(X.shape[1])
    for r in range(epochs):
        for i in epoch_order(seed, r, X.shape[0]):
            theta = theta - eta * huber_dz(eps, y[i], X[i] @ theta) * X[i]
    return theta


def test_sgd_matches_reference_loop():
    data = _data(n=25, d=3, seed=5)
    cfg = SgdConfig(epochs=4, learning_rate=0.05, permutation_seed=9)
    got = fit_sgd(data, cfg, 0.7).theta
    np.testing.assert_allclose(got, _reference_sgd(data.X, data.y, 4, 0.05, 0.7, 9), rtol=1e-13, atol=1e-15)


def test_sgd_deterministic_and_seed_sensitive():
    data = _data()
    a = fit_sgd(data, SgdConfig(epochs=3, learning_rate=0.1, permutation_seed=1), 1.0).theta
    b = fit_sgd(data, SgdConfig(epochs=3, learning_rate=0.1, permutation_seed=1), 1.0).theta
    c = fit_sgd(data, SgdConfig(epochs=3, learning_rate=0.1, permutation_seed=2), 1.0).theta
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_sgd_warns_on_large_step():
    data = _data()
    with pytest.warns(RuntimeWarning, match="exceeds"):
        fit_sgd(data, SgdConfig(epochs=1, learning_rate=100.0), 1.0)


def test_coupled_loo_fit():
    data = _data(n=10, d=2, seed=8)
    cfg = SgdConfig(epochs=5, learning_rate=0.1, permutation_seed=4)
    with_pt, without = fit_sgd_coupled_loo(data, (np.array([0.3, -0.2]), 2.0), cfg, 1.0)
    np.testing.assert_array_equal(without.theta, fit_sgd(data, cfg, 1.0).theta)
    assert not np.array_equal(with_pt.theta, without.theta)


def test_sgd_trains_an_mlp():
    data = _data(n=40, d=3, seed=1)
    net = init_mlp([3, 8, 1], np.random.default_rng(0))
    before = huber_loss(1.0, data.y, net.predict(data.X)).mean()
    out = fit_sgd(data, SgdConfig(epochs=30, learning_rate=0.05), 1.0, mlp=net)
    after = huber_loss(1.0, data.y, out.predict(data.X)).mean()
    assert after < before
    # the starting network is not modified in place
    assert huber_loss(1.0, data.y, net.predict(data.X)).mean() == before


def _brute_stump(X, y):
    best = (np.sum((y - y.mean()) ** 2), None)
    for f in range(X.shape[1]):
        vals = np.unique(X[:, f])
        for a, b in zip(vals[:-1], vals[1:]):
            t = 0.5 * (a + b)
            L, R = y[X[:, f] <= t], y[X[:, f] > t]
            sse = np.sum((L - L.mean()) ** 2) + np.sum((R - R.mean()) ** 2)
            if sse < best[0] - 1e-9:
                best = (sse, (f, t))
    return best


def test_stump_matches_brute_force_split():
    rng = np.random.default_rng(3)
    for _ in range(20):
        X = rng.normal(size=(15, 3))
        y = rng.normal(size=15)
        tree = fit_tree(X, y, BaseLearnerSpec(max_depth=1))
        sse, split = _brute_stump(X, y)
        assert (tree.feature[0], tree.threshold[0]) == pytest.approx(split)
        assert np.sum((y - tree.predict(X)) ** 2) == pytest.approx(sse)


def test_deep_tree_interpolates_distinct_points():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(16, 2))
    y = rng.normal(size=16)
    tree = fit_tree(X, y, BaseLearnerSpec(max_depth=10))
    np.testing.assert_allclose(tree.predict(X), y)


def test_bagging_determinism_and_ranges():
    data = _data(n=20, d=2)
    cfg = BaggingConfig(n_bags=15, seed=7)
    a, b = fit_bagging(data, cfg), fit_bagging(data, cfg)
    np.testing.assert_array_equal(a.predict(data.X), b.predict(data.X))
    assert a.base_predictions(data.X).shape == (15, 20)
    pred = a.predict(data.X)
    assert pred.min() >= data.y.min() and pred.max() <= data.y.max()
    assert np.all(a.bag_ranges[:, 0] >= data.y.min())
