"""UT utilities and the BS cost decomposition."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .delay import service_model
from .model import CacheState, NetworkConfig, PreferenceMatrix


@dataclass(frozen=True)
class CostBreakdown:
    reward_cost: float
    serving_cost: float

    @property
    def total(self) -> float:
        return self.reward_cost + self.serving_cost


def _matrix(x) -> np.ndarray:
    return x.x if isinstance(x, CacheState) else np.asarray(x, dtype=float)


def _p(prefs) -> np.ndarray:
    return prefs.p if isinstance(prefs, PreferenceMatrix) else np.asarray(prefs, dtype=float)


def reward_terms(x, r: float, cfg: NetworkConfig, prefs) -> np.ndarray:
    """Per-content reward income of every UT, shape (..., N, M)."""
    served = service_model(cfg).served(_matrix(x))
    return r * cfg.content_sizes * np.einsum("...ijm,jm->...im", served, _p(prefs))


def delay_terms(x, cfg: NetworkConfig, prefs) -> np.ndarray:
    """Per-content weighted delay cost of every UT, shape (..., N, M)."""
    dbar = service_model(cfg).avg_delay(_matrix(x))
    return cfg.w_d * _p(prefs) * cfg.content_sizes * dbar


def utility_terms(x, r: float, cfg: NetworkConfig, prefs) -> np.ndarray:
    return reward_terms(x, r, cfg, prefs) - delay_terms(x, cfg, prefs)


def ut_utilities(x, r: float, cfg: NetworkConfig, prefs) -> np.ndarray:
    return utility_terms(x, r, cfg, prefs).sum(axis=-1)


def ut_utility(i: int, x, r: float, cfg: NetworkConfig, prefs) -> float:
    return float(ut_utilities(x, r, cfg, prefs)[..., i])


def ut_cost(i: int, x, r: float, cfg: NetworkConfig, prefs) -> float:
    return -ut_utility(i, x, r, cfg, prefs)


def reward_income(x, r: float, cfg: NetworkConfig, prefs) -> np.ndarray:
    return reward_terms(x, r, cfg, prefs).sum(axis=-1)


def bs_cost(x, r: float, cfg: NetworkConfig, prefs) -> CostBreakdown:
    x = _matrix(x)
    p = _p(prefs)
    sm = service_model(cfg)
    served = sm.served(x)  # (i, j, m); the BS pays provider i for requester j
    weight = p * cfg.content_sizes  # requester-side p_j^m s_m
    reward = r * float(np.einsum("ijm,jm->", served, weight))
    serving = cfg.w_s * float(np.sum(weight * cfg.bs_delay[:, None] * sm.residual(x)))
    return CostBreakdown(reward_cost=reward, serving_cost=serving)


def deviation_terms(x, rows: np.ndarray, r: float, cfg: NetworkConfig, prefs) -> np.ndarray:
    """Per-content utility of each UT i when only its own row is replaced by ``rows[..., i, :]``.

    Everyone else keeps their row of ``x``. ``rows`` may carry leading batch
    dimensions. Equivalent to evaluating :func:`utility_terms` once per UT on
    the modified matrix, without the N-fold cost.
    """
    x = _matrix(x)
    p = _p(prefs)
    sm = service_model(cfg)
    rows = np.minimum(np.asarray(rows, dtype=float), 1.0)
    xo = sm.ordered(x)
    before = np.cumsum(xo, axis=-2) - xo
    # ranks never include i itself, so the capacity left for i is independent of x_i
    cap = np.maximum(0.0, 1.0 - before[sm._cols, sm.rank, :])  # (i, j, M)
    served = np.minimum(rows[..., :, None, :], cap)
    reward = r * cfg.content_sizes * np.einsum("...ijm,ij,jm->...im", served, sm.neighbor, p)

    others = xo[:, 1:, :]  # (i, K-1, M), providers of i after itself
    others_before = np.cumsum(others, axis=-2) - others
    left = 1.0 - rows[..., :, None, :] - others_before
    supply = np.minimum(others, np.maximum(0.0, left))
    resid = np.maximum(0.0, 1.0 - rows - others.sum(axis=-2))
    dbar = np.einsum("...ikm,ik->...im", supply, sm.order_delay[:, 1:]) + resid * sm.bs_delay[:, None]
    return reward - cfg.w_d * p * cfg.content_sizes * dbar
