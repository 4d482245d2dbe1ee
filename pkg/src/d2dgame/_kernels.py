"""Compiled inner loops for the sub-game solver.

Same arithmetic as :func:`d2dgame.payoff.deviation_terms` and
:func:`d2dgame.subgame.project_rows_euclidean`; the test-suite checks the
two paths against each other.
"""

from __future__ import annotations

import numpy as np
from numba import njit

# a window whose net move is below this many single steps counts as stalled
STALL_FACTOR = 2.0
# ...unless it points the same way as the previous window's move (cosine above this),
# which means the iterate is still drifting rather than bouncing on a kink
DRIFT_COS = 0.5


@njit(cache=True)
def _delay_fill(v, i, m, x, order, order_delay, kcount, bs_delay):
    """Per-bit delay of requester i for content m when its own share is v."""
    rem = 1.0 - (v if v < 1.0 else 1.0)
    dsum = 0.0
    for k in range(1, kcount[i]):
        if rem <= 0.0:
            return dsum
        xk = x[order[i, k], m]
        got = xk if xk < rem else rem
        dsum += got * order_delay[i, k]
        rem -= got
    return dsum + rem * bs_delay[i]


@njit(cache=True)
def capacities(x, order, kcount, n):
    """cap[i, j, m]: fraction of m still missing for requester j when provider i's turn comes."""
    m_count = x.shape[1]
    cap = np.zeros((n, n, m_count))
    for j in range(n):
        for m in range(m_count):
            before = 0.0
            for k in range(kcount[j]):
                q = order[j, k]
                left = 1.0 - before
                cap[q, j, m] = left if left > 0.0 else 0.0
                before += x[q, m]
    return cap


@njit(cache=True)
def gradients(x, r, delta, order, order_delay, kcount, nbr_of, nbr_count, bs_delay, p, sizes, w_d):
    n, m_count = x.shape
    cap = capacities(x, order, kcount, n)
    g = np.empty((n, m_count))
    for i in range(n):
        for m in range(m_count):
            v = x[i, m]
            h = 1.0 - v
            if h > delta:
                h = delta
            if h < 0.5 * delta:
                h = -delta
            u = v + h
            # difference of the two utilities, accumulated term by term
            reward = 0.0
            for q in range(nbr_count[i]):
                j = nbr_of[i, q]
                c = cap[i, j, m]
                reward += p[j, m] * ((u if u < c else c) - (v if v < c else c))
            dd = _delay_fill(u, i, m, x, order, order_delay, kcount, bs_delay)
            dd -= _delay_fill(v, i, m, x, order, order_delay, kcount, bs_delay)
            g[i, m] = (r * sizes[m] * reward - w_d * p[i, m] * sizes[m] * dd) / (u - v)
    return g


@njit(cache=True)
def project_row_euclid(y, c, sizes):
    m_count = y.shape[0]
    out = np.empty(m_count)
    load = 0.0
    for m in range(m_count):
        v = min(max(y[m], 0.0), 1.0)
        out[m] = v
        load += v * sizes[m]
    if load <= c:
        return out
    # breakpoints of load(t) = sum s clip(y - t s, 0, 1)
    ev = np.empty(2 * m_count)
    ds = np.empty(2 * m_count)
    slope = 0.0
    for m in range(m_count):
        s2 = sizes[m] * sizes[m]
        ym = y[m]
        ev[m] = (ym - 1.0) / sizes[m] if ym >= 1.0 else np.inf
        ds[m] = -s2
        ev[m_count + m] = ym / sizes[m] if ym > 0.0 else np.inf
        ds[m_count + m] = s2
        if 0.0 < ym < 1.0:
            slope -= s2
    idx = np.argsort(ev, kind="mergesort")
    t = 0.0
    tau = 0.0
    for e in range(2 * m_count):
        te = ev[idx[e]]
        nxt = load + slope * (te - t) if np.isfinite(te) else -np.inf
        if nxt <= c:
            tau = t + (load - c) / -slope
            break
        load = nxt
        t = te
        slope += ds[idx[e]]
    for m in range(m_count):
        out[m] = min(max(y[m] - tau * sizes[m], 0.0), 1.0)
    return out


@njit(cache=True)
def project_rows_euclid(y, caches, sizes):
    out = np.empty_like(y)
    for i in range(y.shape[0]):
        out[i] = project_row_euclid(y[i], caches[i], sizes)
    return out


@njit(cache=True)
def project_rows_scale(y, caches, sizes):
    out = np.empty_like(y)
    for i in range(y.shape[0]):
        load = 0.0
        for m in range(y.shape[1]):
            v = min(max(y[i, m], 0.0), 1.0)
            out[i, m] = v
            load += v * sizes[m]
        if load > caches[i]:
            w = caches[i] / load
            for m in range(y.shape[1]):
                out[i, m] *= w
    return out


class KernelNetwork:
    """Flat arrays of one network, laid out for the compiled kernels."""

    def __init__(self, cfg, prefs):
        from .delay import service_model

        sm = service_model(cfg)
        n = cfg.n_uts
        self.order = sm.order
        self.order_delay = sm.order_delay
        self.kcount = np.array([1 + len(cfg.neighbor_sets[j]) for j in range(n)], dtype=np.int64)
        nbr_of = np.zeros((n, max(1, n)), dtype=np.int64)
        nbr_count = np.zeros(n, dtype=np.int64)
        for i in range(n):
            js = np.flatnonzero(sm.neighbor[i])
            nbr_of[i, : len(js)] = js
            nbr_count[i] = len(js)
        self.nbr_of = nbr_of
        self.nbr_count = nbr_count
        self.bs_delay = np.ascontiguousarray(cfg.bs_delay, dtype=float)
        self.p = np.ascontiguousarray(prefs.p if hasattr(prefs, "p") else prefs, dtype=float)
        self.sizes = np.ascontiguousarray(cfg.content_sizes, dtype=float)
        self.caches = np.ascontiguousarray(cfg.cache_sizes, dtype=float)
        self.w_d = float(cfg.w_d)

    def gradients(self, x, r, delta):
        return gradients(
            x, float(r), float(delta), self.order, self.order_delay, self.kcount,
            self.nbr_of, self.nbr_count, self.bs_delay, self.p, self.sizes, self.w_d,
        )

    def run_jacobi(self, x, r, params):
        return run_jacobi(
            np.ascontiguousarray(x, dtype=float), float(r), float(params.step_gamma), float(params.fd_delta),
            float(params.inner_tol), int(params.inner_max_sweeps), int(params.decay_window),
            bool(params.step_decay), params.projection == "euclidean", STALL_FACTOR, DRIFT_COS,
            self.order, self.order_delay, self.kcount, self.nbr_of, self.nbr_count,
            self.bs_delay, self.p, self.sizes, self.caches, self.w_d,
        )

    def project(self, y, mode):
        if mode == "euclidean":
            return project_rows_euclid(y, self.caches, self.sizes)
        return project_rows_scale(y, self.caches, self.sizes)


@njit(cache=True)
def stalled(move, prev_move, window_max, stall, drift_cos):
    if np.abs(move).max() >= stall * window_max:
        return False
    a = np.sqrt((move * move).sum())
    b = np.sqrt((prev_move * prev_move).sum())
    if a == 0.0 or b == 0.0:
        return True
    return (move * prev_move).sum() / (a * b) < drift_cos


@njit(cache=True)
def run_jacobi(x, r, gamma, delta, tol, max_sweeps, window, decay, euclid, stall, drift_cos,
               order, order_delay, kcount, nbr_of, nbr_count, bs_delay, p, sizes, caches, w_d):
    anchor = x.copy()
    prev_move = np.zeros_like(x)
    window_max = 0.0
    halvings = 0
    step = np.inf
    sweeps = 0
    converged = False
    for sweeps in range(1, max_sweeps + 1):
        g = gradients(x, r, delta, order, order_delay, kcount, nbr_of, nbr_count, bs_delay, p, sizes, w_d)
        y = x + gamma * g
        if euclid:
            nxt = project_rows_euclid(y, caches, sizes)
        else:
            nxt = project_rows_scale(y, caches, sizes)
        step = np.abs(nxt - x).max()
        x = nxt
        if step < tol:
            converged = True
            break
        if step > window_max:
            window_max = step
        if decay and sweeps % window == 0:
            move = x - anchor
            if stalled(move, prev_move, window_max, stall, drift_cos):
                gamma *= 0.5
                halvings += 1
            prev_move = move
            anchor = x.copy()
            window_max = 0.0
    return x, sweeps, step, converged, gamma, halvings
