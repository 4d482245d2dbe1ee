"""Stackelberg caching-incentive game for wireless D2D networks."""

from .model import (
    CacheState,
    ConfigError,
    EquilibriumResult,
    NetworkConfig,
    PreferenceMatrix,
    SolverParams,
    load_config,
    validate_cache_state,
)

__all__ = [
    "CacheState",
    "ConfigError",
    "EquilibriumResult",
    "NetworkConfig",
    "PreferenceMatrix",
    "SolverParams",
    "load_config",
    "validate_cache_state",
]
