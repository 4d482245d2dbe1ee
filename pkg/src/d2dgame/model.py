"""Domain types, validation and config ingestion.

Every index stored in the arrays below is 0-based. File formats and error
messages use 1-based UT/content indices.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

PROB_RENORM_TOL = 1e-6
FEAS_TOL = 1e-9


class ConfigError(ValueError):
    """Raised when a configuration violates a schema rule or invariant."""


def _check(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigError(msg)


def _frozen(a: Any, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class NetworkConfig:
    """Topology, delay costs, sizes and cost weights of one cell."""

    content_sizes: np.ndarray
    cache_sizes: np.ndarray
    neighbor_sets: tuple[frozenset[int], ...]
    d2d_delay: np.ndarray
    bs_delay: np.ndarray
    w_d: float
    w_s: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "content_sizes", _frozen(self.content_sizes))
        object.__setattr__(self, "cache_sizes", _frozen(self.cache_sizes))
        object.__setattr__(self, "d2d_delay", _frozen(self.d2d_delay))
        object.__setattr__(self, "bs_delay", _frozen(self.bs_delay))
        object.__setattr__(
            self, "neighbor_sets", tuple(frozenset(int(k) for k in s) for s in self.neighbor_sets)
        )
        object.__setattr__(self, "w_d", float(self.w_d))
        object.__setattr__(self, "w_s", float(self.w_s))
        self._validate()

    @property
    def n_uts(self) -> int:
        return len(self.cache_sizes)

    @property
    def n_contents(self) -> int:
        return len(self.content_sizes)

    def _validate(self) -> None:
        n, m = self.n_uts, self.n_contents
        _check(n >= 1 and m >= 1, "need at least one UT and one content")
        _check(self.content_sizes.shape == (m,), "content_sizes has wrong length")
        _check(self.bs_delay.shape == (n,), f"bs_delay must have length {n}")
        _check(self.d2d_delay.shape == (n, n), f"d2d_delay must be {n}x{n}")
        _check(len(self.neighbor_sets) == n, f"neighbors must list {n} sets")
        bad = np.flatnonzero(self.content_sizes <= 0)
        _check(bad.size == 0, f"content size must be > 0 (content {int(bad[0]) + 1 if bad.size else 0})")
        bad = np.flatnonzero(self.cache_sizes <= 0)
        _check(bad.size == 0, f"cache size must be > 0 (UT {int(bad[0]) + 1 if bad.size else 0})")
        _check(self.w_d >= 0 and self.w_s >= 0, "w_d and w_s must be >= 0")
        d = self.d2d_delay
        for i in range(n):
            _check(d[i, i] == 0, f"d2d_delay diagonal must be zero (d[{i + 1},{i + 1}]={d[i, i]})")
        neg = np.argwhere(d < 0)
        _check(neg.size == 0, f"negative D2D delay at {tuple(int(v) + 1 for v in neg[0]) if neg.size else ''}")
        asym = np.argwhere(d != d.T)
        _check(asym.size == 0, f"d2d_delay not symmetric at {tuple(int(v) + 1 for v in asym[0]) if asym.size else ''}")
        for i, s in enumerate(self.neighbor_sets):
            _check(i not in s, f"UT {i + 1} lists itself as a neighbor")
            for j in s:
                _check(0 <= j < n, f"UT {i + 1} has out-of-range neighbor {j + 1}")
                _check(i in self.neighbor_sets[j], f"neighbor relation not symmetric: {i + 1}->{j + 1}")
            dmax = max((d[j, i] for j in s), default=0.0)
            _check(
                self.bs_delay[i] > dmax,
                f"bs_delay[{i + 1}]={self.bs_delay[i]} must exceed every D2D delay of UT {i + 1}",
            )


@dataclass(frozen=True, eq=False)
class PreferenceMatrix:
    p: np.ndarray

    def __post_init__(self) -> None:
        p = np.array(self.p, dtype=float)
        _check(p.ndim == 2, "preferences must be an N x M matrix")
        neg = np.argwhere(p < 0)
        _check(neg.size == 0, f"negative request probability at {tuple(int(v) + 1 for v in neg[0]) if neg.size else ''}")
        sums = p.sum(axis=1)
        for i, s in enumerate(sums):
            _check(
                abs(s - 1.0) <= PROB_RENORM_TOL,
                f"preference row {i + 1} sums to {s:.9g}, expected 1",
            )
        # rows already at 1 up to rounding are left alone so reloading is exact
        off = np.abs(sums - 1.0) > 4 * np.finfo(float).eps
        p[off] = p[off] / sums[off, None]
        object.__setattr__(self, "p", _frozen(p))


@dataclass(frozen=True)
class SolverParams:
    """Knobs for the iterative gradient algorithm.

    ``projection`` selects the feasibility step after each gradient update:
    ``"euclidean"`` (default) or ``"scale"`` (uniform row scaling).
    ``step_decay`` halves the step whenever a window of ``decay_window``
    sweeps makes no net progress. ``arm_reward`` is the reward below which
    the outer stop rule is not armed; ``None`` means ``w_d * max(bs_delay)``.
    """

    fd_delta: float = 1e-6
    step_gamma: float = 1e-2
    reward_step: float = 0.05
    inner_tol: float = 1e-6
    inner_max_sweeps: int = 100_000
    stop_patience: int = 3
    rng_seed: int = 0
    projection: str = "euclidean"
    update: str = "jacobi"
    init: str = "zero"
    step_decay: bool = True
    decay_window: int = 200
    warm_start: bool = True
    arm_reward: float | None = None
    r_max: float | None = None
    backend: str = "numba"

    def __post_init__(self) -> None:
        for name in ("fd_delta", "step_gamma", "reward_step", "inner_tol"):
            _check(getattr(self, name) > 0, f"solver.{name} must be positive")
        _check(self.fd_delta < 1e-3, "solver.fd_delta must be < 1e-3")
        _check(self.inner_max_sweeps > 0, "solver.inner_max_sweeps must be positive")
        _check(self.stop_patience > 0, "solver.stop_patience must be positive")
        _check(self.decay_window > 1, "solver.decay_window must be > 1")
        _check(self.projection in ("euclidean", "scale"), f"unknown projection {self.projection!r}")
        _check(self.update in ("jacobi", "gauss_seidel"), f"unknown update mode {self.update!r}")
        _check(self.init in ("zero", "greedy", "random"), f"unknown init {self.init!r}")
        _check(self.backend in ("numba", "numpy"), f"unknown backend {self.backend!r}")


@dataclass
class CacheState:
    """Fractional placement matrix; row i is UT i's caching policy."""

    x: np.ndarray

    def __post_init__(self) -> None:
        self.x = np.array(self.x, dtype=float)


@dataclass
class ValidationReport:
    ok: bool
    range_violations: list[tuple[int, int]] = field(default_factory=list)
    budget_violations: list[int] = field(default_factory=list)

    def __bool__(self) -> bool:
        return self.ok

    def describe(self) -> str:
        if self.ok:
            return "ok"
        parts = [f"x[{i + 1},{m + 1}] outside [0,1]" for i, m in self.range_violations]
        parts += [f"row {i + 1} exceeds cache size" for i in self.budget_violations]
        return "; ".join(parts)


def validate_cache_state(x: CacheState | np.ndarray, cfg: NetworkConfig) -> ValidationReport:
    x = x.x if isinstance(x, CacheState) else np.asarray(x, dtype=float)
    if x.shape != (cfg.n_uts, cfg.n_contents):
        raise ValueError(f"cache state has shape {x.shape}, expected {(cfg.n_uts, cfg.n_contents)}")
    rng_bad = np.argwhere((x < -FEAS_TOL) | (x > 1 + FEAS_TOL))
    load = x @ cfg.content_sizes
    bud_bad = np.flatnonzero(load > cfg.cache_sizes + FEAS_TOL)
    return ValidationReport(
        ok=rng_bad.size == 0 and bud_bad.size == 0,
        range_violations=[(int(i), int(m)) for i, m in rng_bad],
        budget_violations=[int(i) for i in bud_bad],
    )


@dataclass
class EquilibriumResult:
    reward: float
    cache_state: np.ndarray
    ut_utilities: np.ndarray
    bs_total_cost: float
    bs_serving_cost: float
    bs_reward_cost: float
    converged: bool = True
    sweep_trace: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "reward": self.reward,
            "cache_state": np.asarray(self.cache_state).tolist(),
            "ut_utilities": np.asarray(self.ut_utilities).tolist(),
            "bs_total_cost": self.bs_total_cost,
            "bs_serving_cost": self.bs_serving_cost,
            "bs_reward_cost": self.bs_reward_cost,
            "converged": self.converged,
            "sweep_trace": self.sweep_trace,
        }

    @classmethod
    def from_dict(cls, d: dict) -> EquilibriumResult:
        return cls(
            reward=d["reward"],
            cache_state=np.array(d["cache_state"], dtype=float),
            ut_utilities=np.array(d["ut_utilities"], dtype=float),
            bs_total_cost=d["bs_total_cost"],
            bs_serving_cost=d["bs_serving_cost"],
            bs_reward_cost=d["bs_reward_cost"],
            converged=d.get("converged", True),
            sweep_trace=list(d.get("sweep_trace", [])),
        )


# ---------------------------------------------------------------------------
# config files
# ---------------------------------------------------------------------------

_SOLVER_KEYS = {f for f in SolverParams.__dataclass_fields__}


def _split_packed(packed: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    _check(packed.shape == (n + 1, n + 1), f"delay_packed must be {n + 1}x{n + 1}")
    # the printed matrix is lower-triangular; symmetrize before splitting
    if np.allclose(np.triu(packed, 1), 0):
        packed = packed + np.tril(packed, -1).T
    _check(packed[n, n] == 0, "delay_packed BS corner must be zero")
    return packed[:n, :n].copy(), packed[:n, n].copy()


def config_from_dict(doc: dict) -> tuple[NetworkConfig, PreferenceMatrix, SolverParams]:
    try:
        n = int(doc["n_uts"])
        m = int(doc["n_contents"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"missing or invalid n_uts/n_contents: {exc}") from exc
    sizes = np.array(doc.get("content_sizes", [1.0] * m), dtype=float)
    caches = np.array(doc.get("cache_sizes", [1.0] * n), dtype=float)
    _check(sizes.shape == (m,), f"content_sizes must have length {m}")
    _check(caches.shape == (n,), f"cache_sizes must have length {n}")
    if "delay_packed" in doc:
        d2d, bs = _split_packed(np.array(doc["delay_packed"], dtype=float), n)
    else:
        _check("d2d_delay" in doc and "bs_delay" in doc, "need d2d_delay + bs_delay or delay_packed")
        d2d = np.array(doc["d2d_delay"], dtype=float)
        bs = np.array(doc["bs_delay"], dtype=float)
    nbr_doc = doc.get("neighbors")
    if nbr_doc is None:
        nbrs = [frozenset(k for k in range(n) if k != i) for i in range(n)]
    else:
        _check(len(nbr_doc) == n, f"neighbors must have {n} entries")
        nbrs = [frozenset(int(k) - 1 for k in row) for row in nbr_doc]
    cfg = NetworkConfig(
        content_sizes=sizes,
        cache_sizes=caches,
        neighbor_sets=tuple(nbrs),
        d2d_delay=d2d,
        bs_delay=bs,
        w_d=doc.get("w_d", 0.5),
        w_s=doc.get("w_s", 20.0),
    )
    solver_doc = dict(doc.get("solver", {}))
    unknown = set(solver_doc) - _SOLVER_KEYS
    _check(not unknown, f"unknown solver keys: {sorted(unknown)}")
    try:
        params = SolverParams(**solver_doc)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    if "preferences" in doc:
        prefs = PreferenceMatrix(np.array(doc["preferences"], dtype=float))
    elif "zipf" in doc:
        from .workload import WorkloadSpec, zipf_preferences

        z = doc["zipf"]
        spec = WorkloadSpec(alpha=float(z["alpha"]), permute=z.get("permute", True), seed=int(z.get("permute_seed", 0)))
        prefs = zipf_preferences(m, spec, n)
    else:
        raise ConfigError("config needs either 'preferences' or 'zipf'")
    _check(prefs.p.shape == (n, m), f"preferences must be {n}x{m}")
    return cfg, prefs, params


def load_config(path: str | Path) -> tuple[NetworkConfig, PreferenceMatrix, SolverParams]:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    _check(isinstance(doc, dict), "config root must be a JSON object")
    return config_from_dict(doc)


def config_to_dict(cfg: NetworkConfig, prefs: PreferenceMatrix, params: SolverParams | None = None) -> dict:
    doc = {
        "n_uts": cfg.n_uts,
        "n_contents": cfg.n_contents,
        "content_sizes": cfg.content_sizes.tolist(),
        "cache_sizes": cfg.cache_sizes.tolist(),
        "neighbors": [sorted(k + 1 for k in s) for s in cfg.neighbor_sets],
        "d2d_delay": cfg.d2d_delay.tolist(),
        "bs_delay": cfg.bs_delay.tolist(),
        "w_d": cfg.w_d,
        "w_s": cfg.w_s,
        "preferences": prefs.p.tolist(),
    }
    if params is not None:
        doc["solver"] = asdict(params)
    return doc


def save_config(path: str | Path, cfg: NetworkConfig, prefs: PreferenceMatrix, params: SolverParams | None = None) -> None:
    Path(path).write_text(json.dumps(config_to_dict(cfg, prefs, params), indent=2))


def configs_equal(a: NetworkConfig, b: NetworkConfig) -> bool:
    return (
        np.array_equal(a.content_sizes, b.content_sizes)
        and np.array_equal(a.cache_sizes, b.cache_sizes)
        and a.neighbor_sets == b.neighbor_sets
        and np.array_equal(a.d2d_delay, b.d2d_delay)
        and np.array_equal(a.bs_delay, b.bs_delay)
        and a.w_d == b.w_d
        and a.w_s == b.w_s
    )
