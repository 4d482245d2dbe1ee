"""Brute-force checks on solver output: grid best responses and Nash deviations.

Everything here evaluates utilities with the plain payoff formulas on full
placement matrices, never through the solver's gradient shortcuts.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb

import numpy as np

from .analytic import TwoByTwoInstance
from .model import CacheState, NetworkConfig
from .payoff import utility_terms

GRID_GUARD = 10_000_000
ENUM_LIMIT = 200_000  # above this the exact DP is used instead of listing rows
TIE_TOL = 1e-12


class TractabilityError(RuntimeError):
    pass


def _levels(grid_step: float) -> int:
    k = round(1.0 / grid_step)
    if k < 1 or abs(k * grid_step - 1.0) > 1e-9:
        raise ValueError(f"grid_step {grid_step} must divide 1 evenly")
    return int(k)


def _matrix(x) -> np.ndarray:
    return np.array(x.x if isinstance(x, CacheState) else x, dtype=float)


def _unit_budget(cfg: NetworkConfig, i: int, k: int) -> int | None:
    """Budget in grid units when all sizes are equal, else None."""
    s = np.asarray(cfg.content_sizes)
    if not np.all(s == s[0]):
        return None
    return int(np.floor(cfg.cache_sizes[i] / s[0] * k + 1e-9))


def grid_row_count(cfg: NetworkConfig, i: int, grid_step: float) -> int:
    """Number of feasible grid rows for UT ``i``."""
    k = _levels(grid_step)
    m = cfg.n_contents
    budget = _unit_budget(cfg, i, k)
    if budget is not None and budget >= m * k:
        return (k + 1) ** m
    if budget is not None:
        # compositions of at most `budget` units into m parts each <= k (inclusion-exclusion)
        return sum((-1) ** j * comb(m, j) * comb(budget - j * (k + 1) + m, m) for j in range(m + 1) if budget - j * (k + 1) >= 0)
    return _count_dp(np.asarray(cfg.content_sizes), cfg.cache_sizes[i], k)


def _count_dp(sizes: np.ndarray, cap: float, k: int) -> int:
    loads = {0.0: 1}
    for s in sizes:
        nxt: dict[float, int] = {}
        for load, cnt in loads.items():
            for q in range(k + 1):
                v = round(load + s * q / k, 9)
                if v > cap + 1e-9:
                    break
                nxt[v] = nxt.get(v, 0) + cnt
        loads = nxt
    return sum(loads.values())


def _grid_rows(cfg: NetworkConfig, i: int, k: int):
    """Feasible grid rows in lexicographic order (as integer level vectors)."""
    sizes = np.asarray(cfg.content_sizes)
    cap = cfg.cache_sizes[i] + 1e-9
    m = len(sizes)
    row = [0] * m

    def walk(pos: int, load: float):
        if pos == m:
            yield tuple(row)
            return
        for q in range(k + 1):
            add = sizes[pos] * q / k
            if load + add > cap:
                break
            row[pos] = q
            yield from walk(pos + 1, load + add)
        row[pos] = 0

    yield from walk(0, 0.0)


def _row_utilities(i: int, x: np.ndarray, rows: np.ndarray, r: float, cfg, prefs) -> np.ndarray:
    batch = np.broadcast_to(x, (len(rows),) + x.shape).copy()
    batch[:, i, :] = rows
    return utility_terms(batch, r, cfg, prefs)[:, i, :].sum(axis=-1)


def _content_table(i: int, x: np.ndarray, k: int, r: float, cfg, prefs) -> np.ndarray:
    """T[q, m]: UT i's utility from content m when x_i^m = q/k (others fixed)."""
    levels = np.arange(k + 1) / k
    batch = np.broadcast_to(x, (k + 1,) + x.shape).copy()
    batch[:, i, :] = levels[:, None]
    return utility_terms(batch, r, cfg, prefs)[:, i, :]


def _best_dp(table: np.ndarray, sizes: np.ndarray, cap: float, k: int) -> tuple[np.ndarray, float]:
    """Exact grid maximum of sum_m table[q_m, m] under the budget, lexicographically smallest on ties.

    The utility is a sum of per-content terms (each depends on x_i^m and the
    fixed column m of the others), so a knapsack over contents is exact.
    """
    m = table.shape[1]
    equal = np.all(sizes == sizes[0])
    if equal:
        budget = int(np.floor(cap / sizes[0] * k + 1e-9))
        budget = min(budget, m * k)
        # V[pos][b]: best value of contents pos.. with b units left
        v = np.zeros((m + 1, budget + 1))
        for pos in range(m - 1, -1, -1):
            for b in range(budget + 1):
                qs = np.arange(min(k, b) + 1)
                v[pos, b] = np.max(table[qs, pos] + v[pos + 1, b - qs])
        choice = np.zeros(m, dtype=int)
        b = budget
        for pos in range(m):
            qs = np.arange(min(k, b) + 1)
            vals = table[qs, pos] + v[pos + 1, b - qs]
            q = int(np.flatnonzero(vals >= vals.max() - TIE_TOL)[0])
            choice[pos] = q
            b -= q
        return choice / k, float(v[0, budget])
    # general sizes: value function keyed by the exact load already used
    cap = cap + 1e-9
    suffix: list[dict[float, float]] = [dict() for _ in range(m + 1)]

    def best_from(pos: int, load: float) -> float:
        key = round(load, 9)
        memo = suffix[pos]
        if key in memo:
            return memo[key]
        if pos == m:
            memo[key] = 0.0
            return 0.0
        out = -np.inf
        for q in range(k + 1):
            nl = load + sizes[pos] * q / k
            if nl > cap:
                break
            out = max(out, table[q, pos] + best_from(pos + 1, nl))
        memo[key] = out
        return out

    total = best_from(0, 0.0)
    choice = np.zeros(m, dtype=int)
    load = 0.0
    for pos in range(m):
        target = best_from(pos, load)
        for q in range(k + 1):
            nl = load + sizes[pos] * q / k
            if nl > cap:
                break
            if table[q, pos] + best_from(pos + 1, nl) >= target - TIE_TOL:
                choice[pos] = q
                load = nl
                break
    return choice / k, float(total)


def best_response_grid(
    i: int, x, r: float, cfg: NetworkConfig, prefs, grid_step: float = 0.01, method: str = "auto"
) -> tuple[np.ndarray, float]:
    """Best grid row for UT ``i`` (0-based) with the other rows of ``x`` held fixed.

    ``method="enumerate"`` lists every feasible grid row and raises
    :class:`TractabilityError` past ``GRID_GUARD`` rows; ``"dp"`` solves the same
    problem exactly by dynamic programming over contents; ``"auto"`` enumerates
    small grids and otherwise uses the DP.
    """
    x = _matrix(x)
    k = _levels(grid_step)
    count = grid_row_count(cfg, i, grid_step)
    if method == "auto":
        method = "enumerate" if count <= ENUM_LIMIT else "dp"
    if method == "enumerate":
        if count > GRID_GUARD:
            raise TractabilityError(f"{count} grid rows for UT {i + 1} exceeds the guard of {GRID_GUARD}")
        rows = np.array(list(_grid_rows(cfg, i, k)), dtype=float) / k
        best_row, best_val = None, -np.inf
        for start in range(0, len(rows), 20_000):
            chunk = rows[start : start + 20_000]
            vals = _row_utilities(i, x, chunk, r, cfg, prefs)
            j = int(np.flatnonzero(vals >= vals.max() - TIE_TOL)[0])
            # rows come in lexicographic order, so earlier chunks win ties
            if vals[j] > best_val + TIE_TOL:
                best_row, best_val = chunk[j], float(vals[j])
        return best_row.copy(), best_val
    if method != "dp":
        raise ValueError(f"unknown method {method!r}")
    table = _content_table(i, x, k, r, cfg, prefs)
    return _best_dp(table, np.asarray(cfg.content_sizes, dtype=float), float(cfg.cache_sizes[i]), k)


@dataclass
class NashReport:
    ok: bool
    worst_ut: int  # 1-based
    margin: float  # largest improvement any UT can get by deviating
    improvements: np.ndarray = field(repr=False)
    best_rows: np.ndarray = field(repr=False)

    def describe(self) -> str:
        verdict = "pass" if self.ok else "FAIL"
        return f"Nash check {verdict}: worst deviator UT {self.worst_ut}, improvement {self.margin:.3g}"


def verify_nash(x, r: float, cfg: NetworkConfig, prefs, grid_step: float = 0.01, eps_dev: float = 1e-3, method: str = "auto") -> NashReport:
    """No UT can gain more than ``eps_dev`` by switching to any grid row."""
    x = _matrix(x)
    current = utility_terms(x, r, cfg, prefs).sum(axis=-1)
    gains = np.zeros(cfg.n_uts)
    rows = np.zeros_like(x)
    for i in range(cfg.n_uts):
        rows[i], val = best_response_grid(i, x, r, cfg, prefs, grid_step, method)
        gains[i] = val - current[i]
    worst = int(np.argmax(gains))
    return NashReport(
        ok=bool(gains.max() <= eps_dev),
        worst_ut=worst + 1,
        margin=float(gains[worst]),
        improvements=gains,
        best_rows=rows,
    )


def exhaustive_ne_2x2(inst: TwoByTwoInstance, r: float, grid_step: float = 0.05, eps_dev: float = 1e-3) -> list[np.ndarray]:
    """All joint grid profiles where neither UT gains more than ``eps_dev`` by a grid deviation."""
    cfg, prefs = inst.to_network()
    k = _levels(grid_step)
    rows = np.array(list(_grid_rows(cfg, 0, k)), dtype=float) / k
    n = len(rows)
    a, b = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    profiles = np.stack([rows[a.ravel()], rows[b.ravel()]], axis=1)  # (n*n, 2, 2)
    u = utility_terms(profiles, r, cfg, prefs).sum(axis=-1).reshape(n, n, 2)
    u1, u2 = u[..., 0], u[..., 1]
    stable = (u1 >= u1.max(axis=0, keepdims=True) - eps_dev) & (u2 >= u2.max(axis=1, keepdims=True) - eps_dev)
    return [np.array([rows[p], rows[q]]) for p, q in zip(*np.nonzero(stable))]


def contains_profile(profiles, target: np.ndarray, tol: float) -> bool:
    return any(np.abs(p - target).max() <= tol for p in profiles)


__all__ = [
    "GRID_GUARD",
    "NashReport",
    "TractabilityError",
    "best_response_grid",
    "contains_profile",
    "exhaustive_ne_2x2",
    "grid_row_count",
    "verify_nash",
]
