"""Provider orderings, greedy residual service and per-bit delay.

A requester is served first from its own cache, then from neighbors in
ascending D2D delay, and finally from the BS for whatever fraction is still
missing. The scalar functions follow the formulas term by term; the
:class:`ServiceModel` evaluates the same quantities for whole (batched)
placement matrices and is what the solvers use.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .model import CacheState, NetworkConfig


@dataclass(frozen=True)
class ProviderOrder:
    requester: int
    sequence: tuple[int, ...]

    @property
    def rank(self) -> dict[int, int]:
        """0-based position of each provider (the requester itself is 0)."""
        return {k: pos for pos, k in enumerate(self.sequence)}


def provider_order(j: int, cfg: NetworkConfig) -> ProviderOrder:
    d = cfg.d2d_delay
    others = sorted(cfg.neighbor_sets[j], key=lambda k: (d[k, j], k))
    return ProviderOrder(j, (j, *others))


def _matrix(x: CacheState | np.ndarray) -> np.ndarray:
    return x.x if isinstance(x, CacheState) else np.asarray(x, dtype=float)


def avg_delay(i: int, m: int, x: CacheState | np.ndarray, cfg: NetworkConfig) -> float:
    """Average per-bit delay for UT ``i`` fetching content ``m``."""
    x = _matrix(x)
    remaining = 1.0
    total = 0.0
    for k in provider_order(i, cfg).sequence:
        if remaining <= 0.0:
            break
        got = min(x[k, m], remaining)
        total += got * cfg.d2d_delay[k, i]
        remaining -= got
    return total + max(0.0, remaining) * cfg.bs_delay[i]


def served_fraction(i: int, j: int, m: int, x: CacheState | np.ndarray, cfg: NetworkConfig) -> float:
    """Portion of content ``m`` that provider ``i`` delivers to requester ``j``."""
    if i == j:
        return 0.0
    x = _matrix(x)
    order = provider_order(j, cfg)
    pos = order.rank.get(i)
    if pos is None:
        return 0.0
    before = sum(x[k, m] for k in order.sequence[:pos])
    return min(x[i, m], max(0.0, 1.0 - before))


def bs_residual(j: int, m: int, x: CacheState | np.ndarray, cfg: NetworkConfig) -> float:
    x = _matrix(x)
    have = x[j, m] + sum(x[k, m] for k in cfg.neighbor_sets[j])
    return max(0.0, 1.0 - have)


class ServiceModel:
    """Vectorized service evaluation for a fixed network.

    Provider orders are padded to a common length ``K``; padded slots point
    at an all-zero virtual row so they never supply anything.
    """

    def __init__(self, cfg: NetworkConfig):
        n = cfg.n_uts
        orders = [provider_order(j, cfg).sequence for j in range(n)]
        k = max(len(o) for o in orders)
        self.n = n
        self.k = k
        self.order = np.full((n, k), n, dtype=int)
        self.order_delay = np.zeros((n, k))
        # rank[i, j]: slot of provider i in requester j's order (k-1 if absent)
        self.rank = np.zeros((n, n), dtype=int)
        self.neighbor = np.zeros((n, n), dtype=bool)  # neighbor[i, j]: i in N_j
        for j, o in enumerate(orders):
            self.order[j, : len(o)] = o
            self.order_delay[j, : len(o)] = [cfg.d2d_delay[q, j] for q in o]
            for pos, q in enumerate(o):
                self.rank[q, j] = pos
                self.neighbor[q, j] = pos > 0
        self.bs_delay = np.array(cfg.bs_delay)
        self._cols = np.arange(n)[None, :]

    def ordered(self, x: np.ndarray) -> np.ndarray:
        """x gathered per requester: shape (..., N, K, M)."""
        pad = np.zeros(x.shape[:-2] + (1, x.shape[-1]))
        return np.concatenate([x, pad], axis=-2)[..., self.order, :]

    def supplies(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Greedy fill: supply of the k-th provider of each requester, and the BS residual."""
        xo = self.ordered(x)
        before = np.cumsum(xo, axis=-2) - xo
        supply = np.minimum(xo, np.maximum(0.0, 1.0 - before))
        residual = np.maximum(0.0, 1.0 - xo.sum(axis=-2))
        return supply, residual

    def avg_delay(self, x: np.ndarray) -> np.ndarray:
        supply, residual = self.supplies(x)
        return np.einsum("...jkm,jk->...jm", supply, self.order_delay) + residual * self.bs_delay[:, None]

    def served(self, x: np.ndarray) -> np.ndarray:
        """F[..., i, j, m]: fraction of m provider i serves requester j (0 unless i in N_j)."""
        supply, _ = self.supplies(x)
        f = supply[..., self._cols, self.rank, :]  # (..., i, j, M)
        return f * self.neighbor[:, :, None]

    def residual(self, x: np.ndarray) -> np.ndarray:
        return self.supplies(x)[1]


@lru_cache(maxsize=128)
def service_model(cfg: NetworkConfig) -> ServiceModel:
    return ServiceModel(cfg)
