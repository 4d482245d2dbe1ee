"""Zipf request workloads, random networks and the incentive-free baselines."""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .model import NetworkConfig, PreferenceMatrix, config_from_dict

SCHEMES = ("RCC", "GC", "PAC", "FC")


@dataclass(frozen=True)
class WorkloadSpec:
    alpha: float
    permute: bool = True
    seed: int = 0

    def __post_init__(self) -> None:
        if self.alpha < 0:
            raise ValueError("Zipf alpha must be >= 0")


def zipf_pmf(m: int, alpha: float) -> np.ndarray:
    q = np.arange(1, m + 1, dtype=float) ** -alpha
    return q / q.sum()


def zipf_preferences(m: int, spec: WorkloadSpec, n: int) -> PreferenceMatrix:
    """Every UT gets the same Zipf profile, independently shuffled when ``spec.permute``."""
    if m < 1:
        raise ValueError("need at least one content")
    q = zipf_pmf(m, spec.alpha)
    if not spec.permute:
        return PreferenceMatrix(np.tile(q, (n, 1)))
    rng = np.random.default_rng(spec.seed)
    return PreferenceMatrix(np.vstack([rng.permutation(q) for _ in range(n)]))


def random_network(
    n: int,
    m: int,
    d2d_range: tuple[float, float] = (0.0, 1.0),
    bs_range: tuple[float, float] = (1.0, 6.0),
    seed: int = 0,
    w_d: float = 0.5,
    w_s: float = 20.0,
    sizes=None,
    caches=None,
) -> NetworkConfig:
    """Fully connected cell with uniformly drawn symmetric D2D delays and BS delays."""
    lo, hi = d2d_range
    blo, bhi = bs_range
    if not (lo < hi and blo < bhi):
        raise ValueError("delay ranges need lo < hi")
    rng = np.random.default_rng(seed)
    d = np.zeros((n, n))
    iu = np.triu_indices(n, 1)
    d[iu] = rng.uniform(lo, hi, len(iu[0]))
    d = d + d.T
    return NetworkConfig(
        content_sizes=np.ones(m) if sizes is None else sizes,
        cache_sizes=np.ones(n) if caches is None else caches,
        neighbor_sets=tuple(frozenset(k for k in range(n) if k != i) for i in range(n)),
        d2d_delay=d,
        bs_delay=rng.uniform(blo, bhi, n),
        w_d=w_d,
        w_s=w_s,
    )


def default_instance_doc() -> dict:
    return json.loads(resources.files("d2dgame").joinpath("data/default_instance.json").read_text())


def default_instance(alpha: float | None = None, seed: int | None = None):
    """The bundled 8-UT / 20-content cell, optionally with a different Zipf workload."""
    doc = default_instance_doc()
    if alpha is not None:
        doc["zipf"]["alpha"] = alpha
    if seed is not None:
        doc["zipf"]["permute_seed"] = seed
    return config_from_dict(doc)


def _whole_contents(order, cache: float, sizes: np.ndarray, unit: bool, i: int) -> np.ndarray:
    row = np.zeros(len(sizes))
    if unit:
        if cache != int(cache) or cache > len(sizes):
            raise ValueError(f"UT {i + 1}: cache size {cache} must be an integer <= M for whole-content caching")
        row[list(order[: int(cache)])] = 1.0
        return row
    room = cache
    for k in order:
        if sizes[k] <= room + 1e-12:
            row[k] = 1.0
            room -= sizes[k]
    return row


def baseline_cache(scheme: str, cfg: NetworkConfig, prefs, seed: int = 0) -> np.ndarray:
    """Placement produced by one of the incentive-free schemes RCC, GC, PAC, FC."""
    scheme = scheme.upper()
    p = prefs.p if isinstance(prefs, PreferenceMatrix) else np.asarray(prefs)
    sizes = np.asarray(cfg.content_sizes)
    caches = np.asarray(cfg.cache_sizes)
    unit = bool(np.all(sizes == 1.0))
    n, m = cfg.n_uts, cfg.n_contents
    if scheme == "RCC":
        rng = np.random.default_rng(seed)
        return np.vstack([_whole_contents(rng.permutation(m), caches[i], sizes, unit, i) for i in range(n)])
    if scheme == "GC":
        return np.vstack(
            [_whole_contents(np.argsort(-p[i], kind="stable"), caches[i], sizes, unit, i) for i in range(n)]
        )
    if scheme == "PAC":
        # surplus from clamping at a whole copy is left unused
        return np.minimum(1.0, caches[:, None] * p / sizes)
    if scheme == "FC":
        return np.minimum(1.0, np.tile(caches[:, None] / sizes.sum(), (1, m)))
    raise ValueError(f"unknown baseline scheme {scheme!r}; expected one of {SCHEMES}")
