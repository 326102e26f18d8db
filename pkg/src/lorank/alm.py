"""Phase I warm start: augmented Lagrangian on the single-factor form.

Works on the variable R with X = R R^T.  The merit function is

    L(R, lambda, rho) = <C, R R^T> + lambda^T res + (rho/2) ||res||^2,
    res = A(R R^T) - b,

minimized in R by L-BFGS with Armijo backtracking, with the multiplier and
penalty updated between inner solves.  Rank escalation hooks in here: an
inner solve that hits its iteration cap flags the subproblem as difficult.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .config import SolverConfig
from .model import SdpProblem, apply_A, apply_A_adjoint_times, objective_value
from . import ranks

log = logging.getLogger(__name__)

__all__ = [
    "BmState", "LbfgsResult", "Phase1Result",
    "bm_residual", "bm_aug_lagrangian", "bm_gradient",
    "lbfgs_minimize", "alm_outer_loop",
]


@dataclass
class BmState:
    """Mutable iterate of the warm-start phase."""

    R: np.ndarray
    lam: np.ndarray
    rho: float
    inner_iter_count: int = 0
    outer_iter: int = 0

    def __post_init__(self):
        if self.rho <= 0:
            raise ValueError("rho must be positive")


def bm_residual(problem: SdpProblem, R: np.ndarray) -> np.ndarray:
    return apply_A(problem, R, R) - problem.rhs


def bm_aug_lagrangian(problem: SdpProblem, R: np.ndarray, lam: np.ndarray,
                      rho: float) -> float:
    res = bm_residual(problem, R)
    return objective_value(problem, R, R) + float(lam @ res) + 0.5 * rho * float(res @ res)


def bm_gradient(problem: SdpProblem, R: np.ndarray, lam: np.ndarray,
                rho: float) -> np.ndarray:
    """Gradient in R: 2 (C + A*(lambda + rho * res)) R."""
    res = bm_residual(problem, R)
    y = lam + rho * res
    return 2.0 * (problem.objective_csr @ R + apply_A_adjoint_times(problem, y, R))


def _value_and_grad(problem, R, lam, rho):
    res = bm_residual(problem, R)
    value = objective_value(problem, R, R) + float(lam @ res) + 0.5 * rho * float(res @ res)
    grad = 2.0 * (problem.objective_csr @ R
                  + apply_A_adjoint_times(problem, lam + rho * res, R))
    return value, grad


@dataclass
class LbfgsResult:
    R: np.ndarray
    iters: int
    converged: bool
    grad_norm: float
    value: float


def lbfgs_minimize(problem: SdpProblem, state: BmState, tol: float,
                   max_inner: int, memory: int = 10) -> LbfgsResult:
    """Drive ||grad||_F / (1 + |L|) below tol, or stop after max_inner steps.

    Two-loop recursion over (s, y) pairs kept in factor shape; Armijo
    backtracking with c1 = 1e-4 and halving from step 1.  Curvature pairs
    with y.s <= 1e-12 ||s|| ||y|| are discarded.  A line search that
    underflows below 1e-20 returns the current iterate flagged.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    R = state.R
    lam, rho = state.lam, state.rho
    value, grad = _value_and_grad(problem, R, lam, rho)
    pairs: list[tuple[np.ndarray, np.ndarray, float]] = []
    c1 = 1e-4

    for it in range(max_inner):
        gnorm = float(np.linalg.norm(grad))
        if gnorm / (1.0 + abs(value)) <= tol:
            state.inner_iter_count = it
            return LbfgsResult(R, it, True, gnorm, value)

        # two-loop recursion
        q = grad.copy()
        alphas = []
        for s, y, rho_pair in reversed(pairs):
            a = rho_pair * float(np.vdot(s, q))
            alphas.append(a)
            q -= a * y
        if pairs:
            s, y, _ = pairs[-1]
            q *= float(np.vdot(s, y) / np.vdot(y, y))
        for (s, y, rho_pair), a in zip(pairs, reversed(alphas)):
            b = rho_pair * float(np.vdot(y, q))
            q += (a - b) * s
        direction = -q
        slope = float(np.vdot(grad, direction))
        if slope >= 0:
            # stale curvature; fall back to steepest descent
            pairs.clear()
            direction = -grad
            slope = -gnorm * gnorm

        step = 1.0
        while True:
            candidate = R + step * direction
            cand_value = bm_aug_lagrangian(problem, candidate, lam, rho)
            if cand_value <= value + c1 * step * slope:
                break
            step *= 0.5
            if step < 1e-20:
                log.warning("line search underflow at inner iteration %d", it)
                state.inner_iter_count = it
                return LbfgsResult(R, it, False, gnorm, value)

        new_value, new_grad = _value_and_grad(problem, candidate, lam, rho)
        s = candidate - R
        y = new_grad - grad
        ys = float(np.vdot(y, s))
        if ys > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            pairs.append((s, y, 1.0 / ys))
            if len(pairs) > memory:
                pairs.pop(0)
        R, value, grad = candidate, new_value, new_grad

    gnorm = float(np.linalg.norm(grad))
    state.inner_iter_count = max_inner
    converged = gnorm / (1.0 + abs(value)) <= tol
    return LbfgsResult(R, max_inner, converged, gnorm, value)


@dataclass
class Phase1Result:
    state: BmState
    converged: bool
    infeasibility: float
    outer_iters: int
    inner_total: int
    escalations: int = 0
    hit_time_limit: bool = False


def alm_outer_loop(problem: SdpProblem, config: SolverConfig,
                   rng: Optional[np.random.Generator] = None,
                   policy: Optional[ranks.RankPolicy] = None,
                   switch_tol: Optional[float] = None,
                   deadline: Optional[float] = None,
                   initial_R: Optional[np.ndarray] = None) -> Phase1Result:
    """Alternate inner L-BFGS solves with dual and penalty updates.

    Stops when ||A(RR^T) - b||_2 / (1 + ||b||_inf) drops below the switching
    tolerance, or at the outer-iteration cap.  When the inner solve hits its
    iteration cap and the rank is below its ceiling, the factor is widened
    instead of updating the multiplier.
    """
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    if policy is None:
        policy = ranks.RankPolicy(
            mode=config.rank_mode,
            escalation_factor=config.rank_escalation_factor,
            difficulty_threshold=config.resolved_difficulty_threshold(),
        )
    if switch_tol is None:
        switch_tol = config.resolved_switch_tol(problem.class_tag)

    n, m = problem.n, problem.m
    cap = policy.cap(n, m)
    if initial_R is not None:
        R = np.array(initial_R, dtype=np.float64)
    else:
        r = ranks.initial_rank(n, m, policy.mode)
        R = rng.standard_normal((n, r)) / math.sqrt(r)
    state = BmState(R=R, lam=np.zeros(m), rho=config.rho_init)

    inner_tol = config.inner_tol_init
    prev_infeas = None
    inner_total = 0
    escalations = 0
    denom = 1.0 + problem.rhs_inf_norm
    infeas = float(np.linalg.norm(bm_residual(problem, state.R))) / denom

    for outer in range(config.phase1_outer_cap):
        state.outer_iter = outer
        result = lbfgs_minimize(
            problem, state, tol=inner_tol,
            max_inner=config.phase1_inner_cap, memory=config.lbfgs_memory)
        state.R = result.R
        inner_total += result.iters

        residual = bm_residual(problem, state.R)
        infeas = float(np.linalg.norm(residual)) / denom
        if infeas <= switch_tol:
            return Phase1Result(state, True, infeas, outer, inner_total, escalations)
        if deadline is not None and time.monotonic() > deadline:
            return Phase1Result(state, False, infeas, outer, inner_total,
                                escalations, hit_time_limit=True)

        if (ranks.should_escalate(result.iters, policy)
                and state.R.shape[1] < cap):
            state.R = ranks.escalate(state.R, policy, cap, rng)
            escalations += 1
            log.debug("outer %d: rank escalated to %d", outer, state.R.shape[1])
            continue

        state.lam = state.lam + state.rho * residual
        if prev_infeas is not None and infeas > config.residual_shrink * prev_infeas:
            state.rho = min(config.rho_double * state.rho, config.rho_max)
        prev_infeas = infeas
        inner_tol = max(inner_tol * config.inner_tol_shrink, config.inner_tol_floor)

    log.warning("phase 1 hit the outer-iteration cap at infeasibility %.3e", infeas)
    return Phase1Result(state, False, infeas, config.phase1_outer_cap,
                        inner_total, escalations)
