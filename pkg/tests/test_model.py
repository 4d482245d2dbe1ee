import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from d2dgame.model import (
    CacheState,
    ConfigError,
    EquilibriumResult,
    SolverParams,
    config_from_dict,
    config_to_dict,
    configs_equal,
    load_config,
    save_config,
    validate_cache_state,
)
from d2dgame.workload import default_instance_doc, random_network

from conftest import line_network


def _small_doc(**extra):
    doc = {
        "n_uts": 3,
        "n_contents": 2,
        "content_sizes": [1, 1],
        "cache_sizes": [1, 1, 1],
        "d2d_delay": [[0, 0.2, 0.4], [0.2, 0, 0.3], [0.4, 0.3, 0]],
        "bs_delay": [2, 3, 4],
        "w_d": 0.5,
        "w_s": 20,
        "preferences": [[0.5, 0.5], [0.9, 0.1], [0.3, 0.7]],
    }
    doc.update(extra)
    return doc


def test_bundled_config_file(tmp_path):
    path = tmp_path / "cell.json"
    path.write_text(json.dumps(default_instance_doc()))
    cfg, prefs, params = load_config(path)
    assert cfg.n_uts == 8 and cfg.n_contents == 20
    assert cfg.d2d_delay[1, 0] == pytest.approx(0.916)
    assert cfg.d2d_delay[0, 1] == pytest.approx(0.916)
    assert cfg.bs_delay[0] == pytest.approx(2.297)
    assert np.allclose(prefs.p.sum(axis=1), 1.0, atol=1e-9)
    assert params.reward_step == 0.05


def test_row_sum_error_names_row():
    doc = _small_doc(preferences=[[0.5, 0.5], [0.6, 0.3], [0.3, 0.7]])
    with pytest.raises(ConfigError, match="row 2"):
        config_from_dict(doc)


def test_nearly_normalized_row_is_renormalized():
    cfg, prefs, _ = config_from_dict(_small_doc(preferences=[[0.5, 0.5000004], [0.9, 0.1], [0.3, 0.7]]))
    assert abs(prefs.p[0].sum() - 1.0) < 1e-12


def test_nonzero_diagonal_rejected():
    d = [[0, 0.2, 0.4], [0.2, 0, 0.3], [0.4, 0.3, 0.5]]
    with pytest.raises(ConfigError, match=r"diagonal.*d\[3,3\]"):
        config_from_dict(_small_doc(d2d_delay=d))


@pytest.mark.parametrize(
    "change, pattern",
    [
        ({"d2d_delay": [[0, 0.2, 0.4], [0.3, 0, 0.3], [0.4, 0.3, 0]]}, "symmetric"),
        ({"bs_delay": [2, 3, 0.35]}, "bs_delay"),
        ({"neighbors": [[2], [], [2]]}, "symmetric"),
        ({"neighbors": [[1], [], []]}, "itself"),
        ({"content_sizes": [1, 0]}, "content size"),
        ({"cache_sizes": [1, -1, 1]}, "cache size"),
        ({"solver": {"step_gamma": -1}}, "step_gamma"),
        ({"solver": {"fd_delta": 0.01}}, "fd_delta"),
        ({"solver": {"bogus": 1}}, "unknown solver"),
    ],
)
def test_invariant_violations(change, pattern):
    with pytest.raises(ConfigError, match=pattern):
        config_from_dict(_small_doc(**change))


def test_missing_file_is_config_error(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.json")


def test_packed_matrix_split():
    doc = _small_doc()
    del doc["d2d_delay"], doc["bs_delay"]
    doc["delay_packed"] = [[0, 0, 0, 0], [0.2, 0, 0, 0], [0.4, 0.3, 0, 0], [2, 3, 4, 0]]
    cfg, _, _ = config_from_dict(doc)
    assert cfg.d2d_delay[0, 2] == 0.4 and cfg.d2d_delay[2, 0] == 0.4
    assert np.array_equal(cfg.bs_delay, [2, 3, 4])


def test_neighbors_default_fully_connected_and_one_based():
    cfg, _, _ = config_from_dict(_small_doc())
    assert cfg.neighbor_sets[0] == frozenset({1, 2})
    cfg, _, _ = config_from_dict(_small_doc(neighbors=[[2], [1], []]))
    assert cfg.neighbor_sets == (frozenset({1}), frozenset({0}), frozenset())


def test_config_is_immutable():
    cfg, _, _ = config_from_dict(_small_doc())
    with pytest.raises(ValueError):
        cfg.d2d_delay[0, 1] = 5.0
    with pytest.raises(AttributeError):
        cfg.w_d = 1.0


@settings(max_examples=30, deadline=None)
@given(n=st.integers(1, 6), m=st.integers(1, 5), seed=st.integers(0, 10_000))
def test_round_trip(n, m, seed, tmp_path_factory):
    rng = np.random.default_rng(seed)
    cfg = random_network(n, m, seed=seed, caches=rng.uniform(0.5, 3, n), sizes=rng.uniform(0.5, 2, m))
    from d2dgame.model import PreferenceMatrix

    prefs = PreferenceMatrix(rng.dirichlet(np.ones(m), n))
    params = SolverParams(step_gamma=0.02, rng_seed=seed)
    path = tmp_path_factory.mktemp("rt") / "cfg.json"
    save_config(path, cfg, prefs, params)
    cfg2, prefs2, params2 = load_config(path)
    assert configs_equal(cfg, cfg2)
    assert np.allclose(prefs.p, prefs2.p, rtol=0, atol=1e-15)  # rows renormalized on load
    assert params == params2
    # once loaded, serializing and loading again is exact
    save_config(path, cfg2, prefs2, params2)
    cfg3, prefs3, params3 = load_config(path)
    assert config_to_dict(cfg3, prefs3, params3) == config_to_dict(cfg2, prefs2, params2)


def _one_ut(m=2):
    return line_network(1, [[0]], [2.0], sizes=np.ones(m), caches=np.ones(1))


def test_validate_zero_state():
    cfg, _, _ = config_from_dict(_small_doc())
    assert validate_cache_state(np.zeros((3, 2)), cfg).ok


def test_validate_budget_violation():
    rep = validate_cache_state(CacheState(np.array([[0.6, 0.6]])), _one_ut())
    assert not rep.ok and rep.budget_violations == [0]
    assert "row 1" in rep.describe()


def test_validate_range_violation():
    rep = validate_cache_state(np.array([[1.2, 0.0]]), _one_ut())
    assert not rep.ok and rep.range_violations == [(0, 0)]
    assert "x[1,1]" in rep.describe()


def test_validate_shape_mismatch():
    with pytest.raises(ValueError):
        validate_cache_state(np.zeros((2, 2)), _one_ut())


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 1.05), min_size=3, max_size=3), st.floats(0.5, 2.5))
def test_validation_agrees_with_direct_summation(row, cache):
    cfg = line_network(1, [[0]], [2.0], sizes=np.array([1.0, 0.5, 2.0]), caches=np.array([cache]))
    x = np.array([row])
    ok = validate_cache_state(x, cfg).ok
    load = 0.0
    for v, s in zip(row, [1.0, 0.5, 2.0]):
        load += v * s
    direct = all(0 <= v <= 1 + 1e-9 for v in row) and load <= cache + 1e-9
    assert ok == direct


def test_equilibrium_result_round_trip():
    res = EquilibriumResult(
        reward=0.5,
        cache_state=np.eye(2),
        ut_utilities=np.array([1.0, -2.0]),
        bs_total_cost=3.0,
        bs_serving_cost=2.5,
        bs_reward_cost=0.5,
        sweep_trace=[{"r": 0.5, "total_cost": 3.0}],
    )
    back = EquilibriumResult.from_dict(json.loads(json.dumps(res.to_dict())))
    assert np.array_equal(back.cache_state, res.cache_state)
    assert back.bs_total_cost == back.bs_serving_cost + back.bs_reward_cost
    assert back.sweep_trace == res.sweep_trace
