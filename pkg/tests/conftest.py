import numpy as np
import pytest

from d2dgame.analytic import TwoByTwoInstance
from d2dgame.model import NetworkConfig, PreferenceMatrix
from d2dgame.workload import default_instance


@pytest.fixture(scope="session")
def bundled():
    return default_instance()


@pytest.fixture
def worked():
    return TwoByTwoInstance(p1=(0.8, 0.2), p2=(0.3, 0.7), w_d=0.5, d12=0.5, d10=2.0, d20=2.0)


def line_network(n, d2d, bs, sizes=None, caches=None, w_d=0.5, w_s=20.0, neighbors=None):
    d = np.asarray(d2d, dtype=float)
    if neighbors is None:
        neighbors = [frozenset(k for k in range(n) if k != i) for i in range(n)]
    m = 1 if sizes is None else len(sizes)
    return NetworkConfig(
        content_sizes=np.ones(m) if sizes is None else sizes,
        cache_sizes=np.ones(n) if caches is None else caches,
        neighbor_sets=tuple(neighbors),
        d2d_delay=d,
        bs_delay=np.asarray(bs, dtype=float),
        w_d=w_d,
        w_s=w_s,
    )


def random_state(rng, cfg):
    """Feasible placement with a random mix of zeros, ones and interior values."""
    n, m = cfg.n_uts, cfg.n_contents
    x = rng.uniform(0, 1, (n, m)) * (rng.uniform(size=(n, m)) < 0.7)
    load = x @ cfg.content_sizes
    scale = np.minimum(1.0, cfg.cache_sizes / np.maximum(load, 1e-12))
    return x * scale[:, None]


def random_prefs(rng, n, m):
    return PreferenceMatrix(rng.dirichlet(np.ones(m), n))


ACCEPTANCE_LINES: list[str] = []


def report(name: str, ok: bool, detail: str) -> None:
    """Record one acceptance verdict; the lines are repeated in the terminal summary."""
    line = f"{'PASS' if ok else 'FAIL'} {name}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
