"""Solver configuration with the class-dependent defaults resolved in one place."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional, Union

__all__ = ["SolverConfig"]


@dataclass
class SolverConfig:
    """Knobs for both phases of the solver.

    ``switch_tol`` and ``heuristic_factor`` default to ``None`` and are then
    picked per problem class: the phase switch fires at primal infeasibility
    1e-3 (1e-2 for MaxCut-structured problems), and the penalty carried into
    the splitting phase is multiplied by h = 10 for MaxCut-like problems,
    5 / 2.5 for matrix completion (below / from order 10000), 1 otherwise.

    The factor-coupling weight gamma defaults to max(1, 2||C||_2): the
    proximal term must dominate the bilinear objective curvature or the
    alternating scheme can diverge, and tying it to the penalty instead
    (``gamma_rule="equal_rho"``) freezes the dual tail on small instances.
    """

    epsilon: float = 1e-5
    switch_tol: Optional[float] = None
    rho_init: float = 1.0
    rho_max: float = 5000.0
    rho_growth: float = 1.2
    rho_growth_every: int = 5
    heuristic_factor: Optional[float] = None
    gamma: Optional[float] = None          # fixed value; None defers to gamma_rule
    gamma_rule: str = "spectral"           # spectral: max(1, 2||C||_2); equal_rho: rho at switch
    stop_on_primal_only: bool = False      # benchmark-aligned stop (primal term alone)
    admm_cap: int = 5000
    warm_start: bool = True
    admm_rho_init: float = 100.0           # initial rho when warm_start is off

    # rank policy
    rank_mode: Union[str, int] = "log_small"   # log_small | log_large | sqrt2m | fixed int
    rank_escalation_factor: float = 1.5
    rank_difficulty_threshold: Optional[int] = None  # None: the phase-1 inner cap

    # conjugate gradient
    cg_tol: float = 1e-8
    cg_max_iter: Optional[int] = None      # None: min(n*r, 1000)

    # phase 1 (augmented Lagrangian + L-BFGS)
    lbfgs_memory: int = 10
    phase1_inner_cap: int = 200
    phase1_outer_cap: int = 100
    inner_tol_init: float = 1e-3
    inner_tol_shrink: float = 0.9
    inner_tol_floor: float = 1e-4
    residual_shrink: float = 0.9           # required per-outer infeasibility decrease
    rho_double: float = 2.0

    seed: int = 42
    time_limit_s: Optional[float] = None
    class_override: Optional[str] = None   # force the problem class used for defaults

    def __post_init__(self):
        for name in ("epsilon", "rho_init", "rho_max", "rho_growth", "cg_tol",
                     "inner_tol_init", "inner_tol_floor", "rho_double"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.switch_tol is not None:
            if self.switch_tol <= 0:
                raise ValueError("switch_tol must be positive")
            if self.epsilon >= self.switch_tol:
                warnings.warn(
                    "epsilon >= switch_tol: phase 2 is asked for a tighter "
                    "tolerance than phase 1 hands over", stacklevel=2)
        if self.rank_escalation_factor <= 1:
            raise ValueError("rank_escalation_factor must exceed 1")
        if self.gamma_rule not in ("spectral", "equal_rho"):
            raise ValueError(f"unknown gamma_rule {self.gamma_rule!r}")

    def resolved_switch_tol(self, class_tag: str) -> float:
        if self.switch_tol is not None:
            return self.switch_tol
        return 1e-2 if class_tag == "maxcut" else 1e-3

    def resolved_heuristic_factor(self, class_tag: str, n: int) -> float:
        if self.heuristic_factor is not None:
            return self.heuristic_factor
        if class_tag == "maxcut":
            return 10.0
        if class_tag == "matrix_completion":
            return 5.0 if n < 10000 else 2.5
        return 1.0

    def resolved_difficulty_threshold(self) -> int:
        if self.rank_difficulty_threshold is not None:
            return self.rank_difficulty_threshold
        return self.phase1_inner_cap
