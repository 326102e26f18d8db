"""Factor-rank selection: logarithmic initialization, escalation, and the cap.

Initial ranks follow round(2 ln m) (or round(ln m) for very large instances),
with round(sqrt(2m)) as the conservative fallback; every rank is capped at
min(n, round(sqrt(2m))).  Escalation widens the factor by 1.5x (ceil), padding
with tiny Gaussian columns so the Gram matrix barely moves; zero padding would
leave the new directions stationary for the warm-start gradient.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

log = logging.getLogger(__name__)

__all__ = ["RankPolicy", "initial_rank", "rank_cap", "should_escalate", "escalate"]

_MODES = ("log_small", "log_large", "sqrt2m")


def _round_half_away(x: float) -> int:
    return int(math.floor(x + 0.5)) if x >= 0 else -int(math.floor(-x + 0.5))


@dataclass(frozen=True)
class RankPolicy:
    """How to pick and grow the factor rank.

    ``mode`` is one of ``log_small``/``log_large``/``sqrt2m`` or a fixed
    integer rank; ``rank_cap`` overrides the min(n, round(sqrt(2m))) ceiling
    when set.
    """

    mode: Union[str, int] = "log_small"
    escalation_factor: float = 1.5
    difficulty_threshold: int = 200
    rank_cap: Optional[int] = None

    def __post_init__(self):
        if isinstance(self.mode, str) and self.mode not in _MODES:
            raise ValueError(f"unknown rank mode {self.mode!r}")
        if isinstance(self.mode, int) and self.mode < 1:
            raise ValueError("fixed rank must be >= 1")
        if self.escalation_factor <= 1:
            raise ValueError("escalation factor must exceed 1")
        if self.difficulty_threshold < 0:
            raise ValueError("difficulty threshold must be nonnegative")

    def cap(self, n: int, m: int) -> int:
        if self.rank_cap is not None:
            return max(1, min(self.rank_cap, n))
        return rank_cap(n, m)


def rank_cap(n: int, m: int) -> int:
    return max(1, min(n, _round_half_away(math.sqrt(2.0 * m))))


def initial_rank(n: int, m: int, mode: Union[str, int]) -> int:
    """Starting rank for the given mode, clamped to [1, n]."""
    if isinstance(mode, int):
        r = mode
    elif mode == "log_small":
        r = _round_half_away(2.0 * math.log(m))
    elif mode == "log_large":
        r = _round_half_away(math.log(m))
    elif mode == "sqrt2m":
        r = _round_half_away(math.sqrt(2.0 * m))
    else:
        raise ValueError(f"unknown rank mode {mode!r}")
    return max(1, min(r, n))


def should_escalate(inner_iters: int, policy: RankPolicy) -> bool:
    """Difficulty signal: the inner solve used at least the threshold count."""
    if inner_iters < 0:
        raise ValueError("iteration count must be nonnegative")
    return inner_iters >= policy.difficulty_threshold


def escalate(R: np.ndarray, policy: RankPolicy, cap: int,
             rng: np.random.Generator) -> np.ndarray:
    """Widen R to min(ceil(factor * r), cap) columns, keeping existing ones.

    New columns carry Gaussian entries at scale 1e-3 ||R||_F / sqrt(n r), so
    R R^T is approximately unchanged.  At the cap this is a no-op.
    """
    n, r = R.shape
    if r >= cap:
        log.warning("rank %d already at cap %d; escalation skipped", r, cap)
        return R
    new_r = min(math.ceil(policy.escalation_factor * r), cap)
    scale = 1e-3 * float(np.linalg.norm(R)) / math.sqrt(n * r)
    if scale == 0.0:
        scale = 1e-3 / math.sqrt(n * r)
    pad = scale * rng.standard_normal((n, new_r - r))
    return np.hstack([R, pad])
