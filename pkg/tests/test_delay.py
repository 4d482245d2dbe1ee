import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from d2dgame.delay import avg_delay, bs_residual, provider_order, served_fraction, service_model
from d2dgame.workload import random_network

from conftest import line_network, random_state


def test_bundled_matrix_order(bundled):
    cfg, _, _ = bundled
    order = provider_order(0, cfg)
    assert order.sequence[:4] == (0, 5, 6, 3)
    assert sorted(order.sequence) == list(range(8))
    assert all(order.sequence[pos] == k for k, pos in order.rank.items())


def test_equal_delay_tie_goes_to_lower_index():
    cfg = line_network(3, [[0, 0.5, 0.5], [0.5, 0, 1], [0.5, 1, 0]], [2, 2, 2])
    assert provider_order(0, cfg).sequence == (0, 1, 2)


def test_isolated_ut():
    cfg = line_network(2, [[0, 0.3], [0.3, 0]], [2, 2], neighbors=[frozenset(), frozenset()])
    assert provider_order(0, cfg).sequence == (0,)
    assert avg_delay(0, 0, np.array([[0.4], [1.0]]), cfg) == pytest.approx(0.6 * 2)


def test_avg_delay_examples():
    cfg = line_network(2, [[0, 0.2], [0.2, 0]], [3, 3])
    assert avg_delay(0, 0, np.array([[1.0], [0.0]]), cfg) == 0.0
    assert avg_delay(0, 0, np.zeros((2, 1)), cfg) == 3.0
    assert avg_delay(0, 0, np.array([[0.3], [0.5]]), cfg) == pytest.approx(0.70, abs=1e-12)


def test_served_fraction_examples():
    # requester 0 is served by itself, then UT 1, then UT 2
    cfg = line_network(3, [[0, 0.1, 0.2], [0.1, 0, 0.3], [0.2, 0.3, 0]], [2, 2, 2])
    x = np.array([[0.2], [0.3], [0.9]])
    assert served_fraction(2, 0, 0, x, cfg) == pytest.approx(0.5)
    assert served_fraction(1, 0, 0, x, cfg) == pytest.approx(0.3)
    assert served_fraction(0, 0, 0, x, cfg) == 0.0
    full = np.array([[1.0], [0.3], [0.9]])
    assert served_fraction(1, 0, 0, full, cfg) == 0.0 and served_fraction(2, 0, 0, full, cfg) == 0.0
    assert served_fraction(1, 0, 0, np.array([[0.2], [0.0], [0.9]]), cfg) == 0.0


def _net(seed, n=4, m=3):
    return random_network(n, m, seed=seed)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10_000))
def test_served_fractions_add_up(seed):
    rng = np.random.default_rng(seed)
    cfg = _net(seed)
    x = random_state(rng, cfg)
    for j in range(cfg.n_uts):
        for m in range(cfg.n_contents):
            total = sum(served_fraction(i, j, m, x, cfg) for i in cfg.neighbor_sets[j])
            total += min(x[j, m], 1.0) + bs_residual(j, m, x, cfg)
            assert total == pytest.approx(1.0, abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10_000))
def test_vectorized_model_matches_scalar(seed):
    rng = np.random.default_rng(seed)
    cfg = _net(seed)
    x = random_state(rng, cfg)
    sm = service_model(cfg)
    dbar, served, resid = sm.avg_delay(x), sm.served(x), sm.residual(x)
    for j in range(cfg.n_uts):
        for m in range(cfg.n_contents):
            assert dbar[j, m] == pytest.approx(avg_delay(j, m, x, cfg), abs=1e-12)
            assert resid[j, m] == pytest.approx(bs_residual(j, m, x, cfg), abs=1e-12)
            for i in range(cfg.n_uts):
                assert served[i, j, m] == pytest.approx(served_fraction(i, j, m, x, cfg), abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(
    st.floats(0, 1), st.floats(0, 1), st.floats(0.01, 1.0), st.floats(1.0, 5.0)
)
def test_two_ut_max_form(x1, x2, d12, extra):
    d10 = d12 + extra
    cfg = line_network(2, [[0, d12], [d12, 0]], [d10, d10])
    x = np.array([[x1], [x2]])
    expected = max((1 - x1) * d12, (1 - x1 - x2) * d10 + x2 * d12)
    assert avg_delay(0, 0, x, cfg) == pytest.approx(expected, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10_000))
def test_avg_delay_non_increasing(seed):
    rng = np.random.default_rng(seed)
    cfg = _net(seed)
    x = random_state(rng, cfg)
    base = service_model(cfg).avg_delay(x)
    i, m = rng.integers(cfg.n_uts), rng.integers(cfg.n_contents)
    y = x.copy()
    y[i, m] = min(1.0, y[i, m] + rng.uniform(0, 0.5))
    assert np.all(service_model(cfg).avg_delay(y) <= base + 1e-12)


def test_avg_delay_convexity_probe():
    rng = np.random.default_rng(7)
    for t in range(1000):
        cfg = _net(t % 50)
        x, y = random_state(rng, cfg), random_state(rng, cfg)
        lam = rng.uniform(0.01, 0.99)
        sm = service_model(cfg)
        mix = sm.avg_delay(lam * x + (1 - lam) * y)
        assert np.all(mix <= lam * sm.avg_delay(x) + (1 - lam) * sm.avg_delay(y) + 1e-9)
