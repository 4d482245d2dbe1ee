"""Closed form for two UTs, two unit-size contents and unit caches."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import NetworkConfig, PreferenceMatrix


class DegenerateInstanceError(ValueError):
    """The other UT is indifferent between the two contents, so the threshold is undefined."""


@dataclass(frozen=True)
class TwoByTwoInstance:
    p1: tuple[float, float]
    p2: tuple[float, float]
    w_d: float
    d12: float
    d10: float
    d20: float

    def __post_init__(self) -> None:
        for name in ("p1", "p2"):
            p = np.asarray(getattr(self, name), dtype=float)
            if p.shape != (2,) or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
                raise ValueError(f"{name} must be a probability vector of length 2")
            object.__setattr__(self, name, (float(p[0]), float(p[1])))
        if not (self.d10 > self.d12 and self.d20 > self.d12):
            raise ValueError("BS delays must exceed the D2D delay")
        if self.d12 < 0 or self.w_d < 0:
            raise ValueError("delays and w_d must be nonnegative")

    def prefs(self, ut: int) -> tuple[float, float]:
        return self.p1 if ut == 1 else self.p2

    def bs_delay(self, ut: int) -> float:
        return self.d10 if ut == 1 else self.d20

    def to_network(self) -> tuple[NetworkConfig, PreferenceMatrix]:
        cfg = NetworkConfig(
            content_sizes=np.ones(2),
            cache_sizes=np.ones(2),
            neighbor_sets=(frozenset({1}), frozenset({0})),
            d2d_delay=np.array([[0.0, self.d12], [self.d12, 0.0]]),
            bs_delay=np.array([self.d10, self.d20]),
            w_d=self.w_d,
            w_s=1.0,
        )
        return cfg, PreferenceMatrix(np.array([self.p1, self.p2]))


def _argmax2(p: tuple[float, float]) -> int:
    return 1 if p[0] >= p[1] else 2


def reward_threshold(inst: TwoByTwoInstance, for_ut: int = 1) -> float:
    """Reward at which ``for_ut`` switches from its own favorite to the other UT's."""
    if for_ut not in (1, 2):
        raise ValueError("for_ut must be 1 or 2")
    own, other = inst.prefs(for_ut), inst.prefs(3 - for_ut)
    gap = other[0] - other[1]
    if gap == 0.0:
        raise DegenerateInstanceError(f"UT {3 - for_ut} has equal preferences; threshold undefined")
    return abs((own[0] - own[1]) / gap) * inst.w_d * inst.bs_delay(for_ut)


def closed_form_policy(inst: TwoByTwoInstance, r: float, for_ut: int = 1) -> tuple[int, int]:
    """(m1, m2), 1-based, each UT caching one whole content.

    Decided from ``for_ut``'s threshold; the other UT takes the remaining
    content. At exactly the threshold the high-reward case applies.
    """
    if r < 0:
        raise ValueError("reward must be >= 0")
    t = reward_threshold(inst, for_ut)
    source = inst.prefs(for_ut) if r < t else inst.prefs(3 - for_ut)
    mine = _argmax2(source)
    theirs = 3 - mine
    return (mine, theirs) if for_ut == 1 else (theirs, mine)


def policy_matrix(policy: tuple[int, int]) -> np.ndarray:
    x = np.zeros((2, 2))
    x[0, policy[0] - 1] = 1.0
    x[1, policy[1] - 1] = 1.0
    return x


def is_consistent(inst: TwoByTwoInstance, r: float) -> bool:
    """Both UTs' own thresholds prescribe the same pairing."""
    return closed_form_policy(inst, r, 1) == closed_form_policy(inst, r, 2)


def ut1_objective(inst: TwoByTwoInstance, x1, x2, r: float) -> np.ndarray:
    """UT 1's utility in the two-UT max form, broadcasting over leading axes."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    p1, p2 = np.asarray(inst.p1), np.asarray(inst.p2)
    reward = p2 * r * np.minimum(x1, 1.0 - x2)
    delay = np.maximum((1.0 - x1) * inst.d12, (1.0 - x1 - x2) * inst.d10 + x2 * inst.d12)
    return (reward - inst.w_d * p1 * delay).sum(axis=-1)


def case_optima(inst: TwoByTwoInstance, x2, r: float, grid_step: float = 0.01) -> tuple[float, float]:
    """Grid maxima of UT 1's problem on the two regions the closed form compares.

    Case 1 keeps both contents unsaturated (x1^m + x2^m <= 1); case 2
    saturates content 2 (x1^2 + x2^2 >= 1) and keeps content 1 unsaturated.
    Returns ``(case1, case2)``; an empty region reports ``-inf``.
    """
    x2 = np.asarray(x2, dtype=float)
    k = int(round(1.0 / grid_step))
    g = np.arange(k + 1) / k
    a, b = np.meshgrid(g, g, indexing="ij")
    pts = np.stack([a.ravel(), b.ravel()], axis=1)
    pts = pts[pts.sum(axis=1) <= 1.0 + 1e-12]
    val = ut1_objective(inst, pts, x2, r)
    tol = 1e-12
    first = pts[:, 0] + x2[0] <= 1.0 + tol
    case1 = first & (pts[:, 1] + x2[1] <= 1.0 + tol)
    case2 = first & (pts[:, 1] + x2[1] >= 1.0 - tol)
    best = lambda mask: float(val[mask].max()) if mask.any() else -np.inf  # noqa: E731
    return best(case1), best(case2)
