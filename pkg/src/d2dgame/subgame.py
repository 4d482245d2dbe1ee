"""Follower side: projected finite-difference gradient play for a fixed reward."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ._kernels import DRIFT_COS, STALL_FACTOR, KernelNetwork, stalled
from .model import CacheState, NetworkConfig, PreferenceMatrix, SolverParams
from .payoff import deviation_terms, ut_utilities, ut_utility

log = logging.getLogger(__name__)


@dataclass
class SubgameTrace:
    sweeps: int
    max_step_norm: float
    utilities: np.ndarray
    converged: bool
    final_gamma: float
    halvings: int = 0


def fd_gradient(i: int, m: int, x, r: float, cfg: NetworkConfig, prefs, delta: float) -> float:
    """Forward difference of U_i in coordinate (i, m), backward at the upper bound."""
    x = np.array(x.x if isinstance(x, CacheState) else x, dtype=float)
    h = min(delta, 1.0 - x[i, m])
    if h < 0.5 * delta:
        h = -delta
    base = ut_utility(i, x, r, cfg, prefs)
    old = x[i, m]
    x[i, m] = old + h
    return (ut_utility(i, x, r, cfg, prefs) - base) / (x[i, m] - old)


def fd_gradients(x: np.ndarray, r: float, cfg: NetworkConfig, prefs, delta: float) -> np.ndarray:
    """All N x M coordinate gradients against the same frozen ``x``."""
    h = np.minimum(delta, 1.0 - x)
    h = np.where(h < 0.5 * delta, -delta, h)
    moved = x + h
    both = deviation_terms(x, np.stack([x, moved]), r, cfg, prefs)
    return (both[1] - both[0]) / (moved - x)


def project_row(row: np.ndarray, c: float, sizes: np.ndarray) -> np.ndarray:
    """Clamp to [0, 1], then shrink the whole row uniformly onto the cache budget."""
    row = np.clip(np.asarray(row, dtype=float), 0.0, 1.0)
    load = float(row @ sizes)
    if load > c:
        row = row * (c / load)
    return row


def project_row_euclidean(row: np.ndarray, c: float, sizes: np.ndarray) -> np.ndarray:
    """Nearest point of {0 <= x <= 1, sizes . x <= c} in the Euclidean norm."""
    return project_rows_euclidean(np.asarray(row, dtype=float)[None, :], np.array([c]), sizes)[0]


def project_rows_euclidean(y: np.ndarray, c: np.ndarray, sizes: np.ndarray) -> np.ndarray:
    out = np.clip(y, 0.0, 1.0)
    over = out @ sizes > c
    if not over.any():
        return out
    yo, co = y[over], c[over]
    # load(t) = sum s * clip(y - t s, 0, 1) is piecewise linear, nonincreasing in t;
    # walk its breakpoints in order and stop on the piece that crosses c
    s2 = sizes * sizes
    t_leave = np.where(yo >= 1.0, (yo - 1.0) / sizes, np.inf)  # coordinate drops below 1
    t_zero = np.where(yo > 0.0, yo / sizes, np.inf)  # coordinate reaches 0
    ev = np.concatenate([t_leave, t_zero], axis=1)
    dslope = np.concatenate([np.broadcast_to(-s2, yo.shape), np.broadcast_to(s2, yo.shape)], axis=1)
    idx = np.argsort(ev, axis=1, kind="stable")
    ev = np.take_along_axis(ev, idx, axis=1)
    dslope = np.take_along_axis(dslope, idx, axis=1)
    slope0 = -(s2 * ((yo > 0.0) & (yo < 1.0))).sum(axis=1)
    slopes = slope0[:, None] + np.cumsum(dslope, axis=1)  # slope after each event
    ts = np.concatenate([np.zeros((len(yo), 1)), ev], axis=1)
    sl = np.concatenate([slope0[:, None], slopes], axis=1)  # slope on [ts[k], ts[k+1])
    finite = np.isfinite(ts)
    dt = np.diff(np.where(finite, ts, 0.0), axis=1)
    dt = np.where(finite[:, 1:], dt, 0.0)
    load0 = out[over] @ sizes
    loads = load0[:, None] + np.concatenate([np.zeros((len(yo), 1)), np.cumsum(sl[:, :-1] * dt, axis=1)], axis=1)
    k = (loads > co[:, None]).sum(axis=1) - 1  # last breakpoint still above budget
    rows = np.arange(len(yo))
    tau = ts[rows, k] + (loads[rows, k] - co) / -sl[rows, k]
    out[over] = np.clip(yo - tau[:, None] * sizes, 0.0, 1.0)
    return out


def project_rows(y: np.ndarray, caches: np.ndarray, sizes: np.ndarray, mode: str = "euclidean") -> np.ndarray:
    if mode == "euclidean":
        return project_rows_euclidean(y, np.asarray(caches), np.asarray(sizes))
    return np.vstack([project_row(row, c, sizes) for row, c in zip(y, caches)])


def initial_state(kind: str, cfg: NetworkConfig, prefs, seed: int = 0) -> np.ndarray:
    n, m = cfg.n_uts, cfg.n_contents
    if kind == "zero":
        return np.zeros((n, m))
    p = prefs.p if isinstance(prefs, PreferenceMatrix) else np.asarray(prefs)
    if kind == "greedy":
        x = np.zeros((n, m))
        for i in range(n):
            room = cfg.cache_sizes[i]
            for k in np.argsort(-p[i], kind="stable"):
                take = min(1.0, room / cfg.content_sizes[k])
                x[i, k] = take
                room -= take * cfg.content_sizes[k]
                if room <= 0:
                    break
        return x
    if kind == "random":
        rng = np.random.default_rng(seed)
        return project_rows(rng.uniform(0.0, 1.0, (n, m)), cfg.cache_sizes, cfg.content_sizes, "scale")
    raise ValueError(f"unknown init {kind!r}")


def solve_subgame(
    x0,
    r: float,
    cfg: NetworkConfig,
    prefs,
    params: SolverParams = SolverParams(),
    on_sweep: Callable[[int, np.ndarray], None] | None = None,
) -> tuple[CacheState, SubgameTrace]:
    """Run simultaneous projected gradient ascent until the iterate stops moving.

    Each sweep evaluates every UT's gradient against the same iterate, takes
    one step of size ``gamma`` and projects each row back onto its cache
    budget. With ``params.step_decay`` the step is halved whenever a window
    of sweeps ends (max-norm) within two single steps of where it started
    and its net move is not aligned with the previous window's. That is how
    the iteration settles on kinks of the piecewise-linear utilities instead
    of bouncing across them, without freezing a slow but steady drift.
    """
    x = np.array(x0.x if isinstance(x0, CacheState) else x0, dtype=float)
    caches, sizes = np.asarray(cfg.cache_sizes), np.asarray(cfg.content_sizes)
    gamma = params.step_gamma
    window = params.decay_window
    anchor = x.copy()
    prev_move = np.zeros_like(x)
    window_max = 0.0
    halvings = 0
    step = np.inf
    converged = False
    sweeps = 0
    if params.backend == "numba" and params.update == "jacobi" and on_sweep is None:
        x, sweeps, step, converged, gamma, halvings = KernelNetwork(cfg, prefs).run_jacobi(x, r, params)
        step = float(step)
    else:
        if params.backend == "numba":
            kn = KernelNetwork(cfg, prefs)
            grad_fn = lambda z: kn.gradients(z, r, params.fd_delta)  # noqa: E731
        else:
            grad_fn = lambda z: fd_gradients(z, r, cfg, prefs, params.fd_delta)  # noqa: E731
        for sweeps in range(1, params.inner_max_sweeps + 1):
            if params.update == "jacobi":
                nxt = project_rows(x + gamma * grad_fn(x), caches, sizes, params.projection)
            else:
                nxt = x.copy()
                for i in range(cfg.n_uts):
                    row = slice(i, i + 1)
                    nxt[row] = project_rows(nxt[row] + gamma * grad_fn(nxt)[row], caches[row], sizes, params.projection)
            step = float(np.abs(nxt - x).max())
            x = nxt
            if on_sweep is not None:
                on_sweep(sweeps, x)
            if step < params.inner_tol:
                converged = True
                break
            window_max = max(window_max, step)
            if params.step_decay and sweeps % window == 0:
                move = x - anchor
                if stalled(move, prev_move, window_max, STALL_FACTOR, DRIFT_COS):
                    gamma *= 0.5
                    halvings += 1
                prev_move = move
                anchor = x.copy()
                window_max = 0.0
    if not converged:
        log.warning("sub-game at r=%g not converged after %d sweeps (step %.3g)", r, sweeps, step)
    trace = SubgameTrace(
        sweeps=sweeps,
        max_step_norm=step,
        utilities=ut_utilities(x, r, cfg, prefs),
        converged=converged,
        final_gamma=gamma,
        halvings=halvings,
    )
    return CacheState(x), trace
