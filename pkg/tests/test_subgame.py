from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from d2dgame._kernels import KernelNetwork
from d2dgame.analytic import closed_form_policy, policy_matrix
from d2dgame.model import PreferenceMatrix, SolverParams, validate_cache_state
from d2dgame.subgame import (
    fd_gradient,
    fd_gradients,
    initial_state,
    project_row,
    project_row_euclidean,
    project_rows,
    solve_subgame,
)
from d2dgame.workload import random_network

from conftest import line_network, random_prefs, random_state


def _isolated():
    cfg = line_network(2, [[0, 0.3], [0.3, 0]], [2.5, 3.0], sizes=np.ones(3), caches=np.ones(2),
                       neighbors=[frozenset(), frozenset()])
    prefs = PreferenceMatrix(np.array([[0.5, 0.5, 0.0], [0.2, 0.3, 0.5]]))
    return cfg, prefs


def test_fd_gradient_isolated_at_zero():
    cfg, prefs = _isolated()
    g = fd_gradient(0, 0, np.zeros((2, 3)), 0.0, cfg, prefs, 1e-6)
    assert g == pytest.approx(cfg.w_d * 0.5 * 2.5, rel=1e-6)


def test_fd_gradient_upper_bound_uses_backward_difference():
    cfg, prefs = _isolated()
    x = np.zeros((2, 3))
    x[0, 0] = 1.0
    g = fd_gradient(0, 0, x, 0.0, cfg, prefs, 1e-6)
    assert np.isfinite(g) and g == pytest.approx(cfg.w_d * 0.5 * 2.5, rel=1e-6)


def test_fd_gradient_absent_coordinate():
    cfg, prefs = _isolated()
    assert fd_gradient(0, 2, np.zeros((2, 3)), 3.0, cfg, prefs, 1e-6) == 0.0


def test_project_row_examples():
    s = np.ones(2)
    assert np.allclose(project_row([0.8, 0.9], 1.0, s), [0.8 / 1.7, 0.9 / 1.7])
    assert np.allclose(project_row([1.4, 0.2], 2.0, s), [1.0, 0.2])
    assert np.array_equal(project_row([0.3, 0.3], 1.0, s), [0.3, 0.3])


def test_euclidean_projection_examples():
    s = np.ones(2)
    assert np.allclose(project_row_euclidean([0.8, 0.9], 1.0, s), [0.45, 0.55])
    assert np.allclose(project_row_euclidean([1.4, 0.2], 2.0, s), [1.0, 0.2])
    assert np.allclose(project_row_euclidean([1.4, -0.2], 1.0, s), [1.0, 0.0])


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 100_000))
def test_euclidean_projection_is_nearest(seed):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(1, 6))
    sizes = rng.uniform(0.3, 2.0, m)
    c = rng.uniform(0.2, sizes.sum())
    y = rng.uniform(-0.5, 1.5, m)
    z = project_row_euclidean(y, c, sizes)
    assert np.all(z >= 0) and np.all(z <= 1) and z @ sizes <= c + 1e-9
    for _ in range(30):
        w = rng.uniform(0, 1, m)
        w = w * min(1.0, c / (w @ sizes))
        assert np.sum((y - z) ** 2) <= np.sum((y - w) ** 2) + 1e-12


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 100_000), st.sampled_from(["euclidean", "scale"]))
def test_compiled_projection_matches(seed, mode):
    rng = np.random.default_rng(seed)
    cfg = random_network(4, 5, seed=seed, sizes=rng.uniform(0.5, 2, 5), caches=rng.uniform(0.5, 4, 4))
    kn = KernelNetwork(cfg, random_prefs(rng, 4, 5))
    y = rng.uniform(-0.5, 1.5, (4, 5))
    assert np.allclose(kn.project(y, mode), project_rows(y, cfg.cache_sizes, cfg.content_sizes, mode), atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 100_000))
def test_compiled_gradients_match_numpy(seed):
    rng = np.random.default_rng(seed)
    cfg = random_network(4, 3, seed=seed, sizes=rng.uniform(0.5, 2, 3), caches=rng.uniform(0.5, 3, 4))
    prefs = random_prefs(rng, 4, 3)
    x = random_state(rng, cfg)
    x[0, 0] = 1.0
    r = rng.uniform(0, 5)
    a = KernelNetwork(cfg, prefs).gradients(x, r, 1e-6)
    b = fd_gradients(x, r, cfg, prefs, 1e-6)
    assert np.allclose(a, b, rtol=1e-6, atol=1e-6)
    i, m = rng.integers(4), rng.integers(3)
    assert b[i, m] == pytest.approx(fd_gradient(i, m, x, r, cfg, prefs, 1e-6), rel=1e-6, abs=1e-6)


def _small(seed):
    rng = np.random.default_rng(seed)
    cfg = random_network(3, 3, seed=seed, caches=np.full(3, 1.0))
    return rng, cfg, random_prefs(rng, 3, 3)


@pytest.mark.parametrize("backend, update", [("numba", "jacobi"), ("numpy", "jacobi"), ("numpy", "gauss_seidel")])
def test_every_sweep_is_feasible(backend, update):
    rng, cfg, prefs = _small(4)
    params = SolverParams(backend=backend, update=update, inner_max_sweeps=400)
    seen = []

    def check(k, x):
        seen.append(k)
        assert validate_cache_state(x, cfg).ok

    solve_subgame(random_state(rng, cfg), 1.0, cfg, prefs, params, on_sweep=check)
    assert seen


def test_backends_agree():
    rng, cfg, prefs = _small(9)
    x0 = random_state(rng, cfg)
    a, ta = solve_subgame(x0, 1.5, cfg, prefs, SolverParams(backend="numba"))
    b, tb = solve_subgame(x0, 1.5, cfg, prefs, SolverParams(backend="numpy"))
    assert ta.converged and tb.converged
    assert np.abs(a.x - b.x).max() < 1e-3


def test_deterministic():
    rng, cfg, prefs = _small(2)
    x0 = random_state(rng, cfg)
    params = SolverParams(init="random", rng_seed=3)
    a, ta = solve_subgame(x0, 0.8, cfg, prefs, params)
    b, tb = solve_subgame(x0, 0.8, cfg, prefs, params)
    assert np.array_equal(a.x, b.x) and ta.sweeps == tb.sweeps
    assert np.array_equal(initial_state("random", cfg, prefs, 5), initial_state("random", cfg, prefs, 5))


@pytest.mark.parametrize("seed", range(6))
def test_converged_state_flags(seed):
    rng, cfg, prefs = _small(seed)
    params = SolverParams()
    state, trace = solve_subgame(np.zeros((3, 3)), rng.uniform(0, 3), cfg, prefs, params)
    if trace.converged:
        assert trace.max_step_norm < params.inner_tol
    assert validate_cache_state(state, cfg).ok


def test_fixed_point_stays(worked):
    cfg, prefs = worked.to_network()
    x = policy_matrix(closed_form_policy(worked, 2.0))
    state, trace = solve_subgame(x, 2.0, cfg, prefs)
    assert trace.converged and trace.sweeps == 1
    assert np.array_equal(state.x, x)


def test_zero_reward_own_interest():
    cfg = random_network(3, 3, seed=1)
    prefs = PreferenceMatrix(np.array([[0.8, 0.1, 0.1], [0.1, 0.8, 0.1], [0.1, 0.1, 0.8]]))
    state, trace = solve_subgame(np.zeros((3, 3)), 0.0, cfg, prefs)
    assert trace.converged
    assert np.abs(state.x - np.eye(3)).max() < 1e-2


def test_scale_projection_runs_and_stays_feasible():
    rng, cfg, prefs = _small(1)
    params = replace(SolverParams(), projection="scale", inner_max_sweeps=2000)
    state, _ = solve_subgame(random_state(rng, cfg), 1.0, cfg, prefs, params)
    assert validate_cache_state(state, cfg).ok


def test_solver_rejects_bad_init():
    _, cfg, prefs = _small(0)
    with pytest.raises(ValueError):
        initial_state("bogus", cfg, prefs)
