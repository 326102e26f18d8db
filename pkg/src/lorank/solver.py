"""Two-phase driver: warm start, phase switch, splitting ADMM, and reporting.

``solve`` runs the warm-start phase until the switching tolerance, hands the
factor over as U = V with the multiplier halved and the penalty scaled by the
class heuristic h, then iterates ADMM sweeps under the growing-penalty
schedule until the scaled primal infeasibility meets the final tolerance.
The recombined factor (U + V)/2 and the conic-dual multiplier (the negated
splitting multiplier) feed the three standardized error metrics.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, fields
from typing import Optional, Sequence

import numpy as np

from . import ranks
from .alm import alm_outer_loop
from .admm import (
    CgBreakdownError, SplitState, admm_sweep, check_termination,
    penalty_schedule, termination_terms,
)
from .config import SolverConfig
from .metrics import dual_infeasibility, pd_gap, primal_infeasibility
from .model import SdpProblem, objective_value, recombine
from .sdpa import write_csv_row

log = logging.getLogger(__name__)

__all__ = ["SolveReport", "detect_class", "solve", "run_benchmark"]

STATUS_CONVERGED = "converged"
STATUS_ITER_CAP = "iter_cap"
STATUS_TIME_CAP = "time_cap"
STATUS_FAILURE = "numerical_failure"


@dataclass(eq=False)
class SolveReport:
    name: str
    n: int
    m: int
    status: str
    objective: float            # sign-corrected for maximization problems
    objective_stored: float     # value of the minimized objective
    p_infeas: float             # ||A(X)-b||_2 / (1 + ||b||_inf)
    p_infeas_one: float
    p_infeas_two: float
    d_infeas: float
    pd_gap: float
    phase1_outer: int
    phase1_inner_total: int
    phase1_infeas: float
    phase2_iters: int
    cg_total: int
    cg_avg: float
    final_rank: int
    escalations: int
    prox_term: float            # proximal movement term at the last sweep
    time_phase1_s: float
    time_phase2_s: float
    time_total_s: float
    factor: Optional[np.ndarray] = None    # recombined factor
    dual: Optional[np.ndarray] = None      # conic-dual multiplier y
    split_u: Optional[np.ndarray] = None   # final splitting factors
    split_v: Optional[np.ndarray] = None

    def csv_row(self) -> str:
        def num(x):
            return "nan" if x is None or (isinstance(x, float) and math.isnan(x)) else f"{x:.17g}"
        return ",".join([
            self.name or "problem", str(self.n), str(self.m),
            str(self.phase1_inner_total), str(self.phase2_iters),
            str(self.cg_total), num(self.time_total_s),
            num(self.p_infeas), num(self.d_infeas), num(self.pd_gap),
        ])

    def identical(self, other: "SolveReport") -> bool:
        """Field-by-field equality with wall times excluded (measurements,
        not computed results)."""
        for f in fields(self):
            if f.name.startswith("time_"):
                continue
            a, b = getattr(self, f.name), getattr(other, f.name)
            if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
                if a is None or b is None or not np.array_equal(a, b):
                    return False
            elif isinstance(a, float) and math.isnan(a) and isinstance(b, float) and math.isnan(b):
                continue
            elif a != b:
                return False
        return True


def spectral_norm_estimate(problem: SdpProblem, iters: int = 50) -> float:
    """Power-iteration estimate of ||C||_2; deterministic start vector."""
    rng = np.random.default_rng(0xC0)
    v = rng.standard_normal(problem.n)
    norm = float(np.linalg.norm(v))
    v /= norm
    est = 0.0
    for _ in range(iters):
        w = problem.objective_csr @ v
        est = float(np.linalg.norm(w))
        if est == 0.0:
            return 0.0
        v = w / est
    return est


def resolve_gamma(problem: SdpProblem, config: SolverConfig, rho_switch: float) -> float:
    if config.gamma is not None:
        return config.gamma
    if config.gamma_rule == "equal_rho":
        return rho_switch
    return max(1.0, 2.0 * spectral_norm_estimate(problem))


def switch_state(problem: SdpProblem, config: SolverConfig, R: np.ndarray,
                 lam: np.ndarray, rho: float, class_tag: str) -> SplitState:
    """Hand the warm-start point to the splitting phase.

    Both factors start at R, the multiplier is halved, and the penalty is
    multiplied by the class heuristic h.
    """
    h = config.resolved_heuristic_factor(class_tag, problem.n)
    rho2 = h * rho
    return SplitState(U=R.copy(), V=R.copy(), lam=lam / 2.0, rho=rho2,
                      gamma=resolve_gamma(problem, config, rho2))


def detect_class(problem: SdpProblem) -> str:
    """Classify by constraint structure; only used to pick heuristic defaults.

    A problem counts as MaxCut-shaped when every constraint is a single unit
    diagonal entry with right-hand side 1 and m = n.
    """
    if problem.class_tag != "generic":
        return problem.class_tag
    if problem.m != problem.n:
        return "generic"
    for A, b in zip(problem.constraints, problem.rhs):
        if b != 1.0 or A.nnz != 1:
            return "generic"
        if A.rows[0] != A.cols[0] or A.vals[0] != 1.0:
            return "generic"
    return "maxcut"


def solve(problem: SdpProblem, config: Optional[SolverConfig] = None) -> SolveReport:
    """Run both phases and assemble the report at the recombined point."""
    config = config if config is not None else SolverConfig()
    rng = np.random.default_rng(config.seed)
    tag = config.class_override or detect_class(problem)
    switch_tol = config.resolved_switch_tol(tag)
    policy = ranks.RankPolicy(
        mode=config.rank_mode,
        escalation_factor=config.rank_escalation_factor,
        difficulty_threshold=config.resolved_difficulty_threshold(),
    )

    n, m = problem.n, problem.m
    t0 = time.monotonic()
    deadline = t0 + config.time_limit_s if config.time_limit_s else None

    if config.warm_start:
        phase1 = alm_outer_loop(problem, config, rng=rng, policy=policy,
                                switch_tol=switch_tol, deadline=deadline)
        state = switch_state(problem, config, phase1.state.R,
                             phase1.state.lam, phase1.state.rho, tag)
        phase1_outer = phase1.outer_iters
        phase1_inner = phase1.inner_total
        phase1_infeas = phase1.infeasibility
        escalations = phase1.escalations
        timed_out = phase1.hit_time_limit
    else:
        r0 = min(ranks.initial_rank(n, m, policy.mode), policy.cap(n, m))
        U0 = rng.standard_normal((n, r0)) / math.sqrt(r0)
        rho2 = config.admm_rho_init
        state = SplitState(U=U0, V=U0.copy(), lam=np.zeros(m), rho=rho2,
                           gamma=resolve_gamma(problem, config, rho2))
        phase1_outer = phase1_inner = escalations = 0
        phase1_infeas = math.nan
        timed_out = False

    t1 = time.monotonic()
    cg_max = config.cg_max_iter or min(2 * n * state.U.shape[1], 1000)

    status = STATUS_TIME_CAP if timed_out else STATUS_ITER_CAP
    cg_total = 0
    sweeps = 0
    prox = math.nan
    if not timed_out:
        for k in range(1, config.admm_cap + 1):
            prev_V = state.V
            try:
                diag = admm_sweep(problem, state, config.cg_tol, cg_max)
            except CgBreakdownError:
                log.exception("CG breakdown in sweep %d", k)
                status = STATUS_FAILURE
                break
            cg_total += diag.cg_iters_u + diag.cg_iters_v
            sweeps = k
            _, prox = termination_terms(problem, state, prev_V)
            if (check_termination(problem, state, prev_V, config.epsilon)
                    and (config.stop_on_primal_only or prox <= config.epsilon)):
                # the reported (recombined) point must meet the bar as well
                U_mid = (state.U + state.V) / 2.0
                if primal_infeasibility(problem, U_mid, U_mid) <= config.epsilon:
                    status = STATUS_CONVERGED
                    break
            state.rho = penalty_schedule(
                state.rho, k, config.rho_growth, config.rho_growth_every,
                config.rho_max)
            if deadline is not None and time.monotonic() > deadline:
                status = STATUS_TIME_CAP
                break
    t2 = time.monotonic()

    U_hat, lam_hat = recombine(state.U, state.V, state.lam)
    y = -state.lam   # conic-dual multiplier for the error formulas
    obj_stored = objective_value(problem, U_hat, U_hat)
    return SolveReport(
        name=problem.name,
        n=n, m=m, status=status,
        objective=-obj_stored if problem.maximize else obj_stored,
        objective_stored=obj_stored,
        p_infeas=primal_infeasibility(problem, U_hat, U_hat, "inf_norm"),
        p_infeas_one=primal_infeasibility(problem, U_hat, U_hat, "one_norm"),
        p_infeas_two=primal_infeasibility(problem, U_hat, U_hat, "two_norm"),
        d_infeas=dual_infeasibility(problem, y),
        pd_gap=pd_gap(problem, U_hat, U_hat, y),
        phase1_outer=phase1_outer,
        phase1_inner_total=phase1_inner,
        phase1_infeas=phase1_infeas,
        phase2_iters=sweeps,
        cg_total=cg_total,
        cg_avg=cg_total / sweeps if sweeps else 0.0,
        final_rank=state.U.shape[1],
        escalations=escalations,
        prox_term=prox,
        time_phase1_s=t1 - t0,
        time_phase2_s=t2 - t1,
        time_total_s=t2 - t0,
        factor=U_hat,
        dual=y,
        split_u=state.U,
        split_v=state.V,
    )


def _failure_report(problem: SdpProblem, elapsed: float) -> SolveReport:
    nan = math.nan
    return SolveReport(
        name=problem.name, n=problem.n, m=problem.m, status=STATUS_FAILURE,
        objective=nan, objective_stored=nan,
        p_infeas=nan, p_infeas_one=nan, p_infeas_two=nan,
        d_infeas=nan, pd_gap=nan,
        phase1_outer=0, phase1_inner_total=0, phase1_infeas=nan,
        phase2_iters=0, cg_total=0, cg_avg=0.0, final_rank=0, escalations=0,
        prox_term=nan, time_phase1_s=0.0, time_phase2_s=0.0,
        time_total_s=elapsed, factor=None, dual=None)


def run_benchmark(problems: Sequence[SdpProblem],
                  config: Optional[SolverConfig] = None,
                  csv_path=None, shift: float = 10.0):
    """Solve each problem, append CSV rows, and aggregate times.

    Per-problem failures become failure rows; they never abort the batch.
    Returns (reports, shifted geometric mean of total times).
    """
    from .metrics import sgm

    if not problems:
        raise ValueError("empty problem list")
    reports = []
    for problem in problems:
        start = time.monotonic()
        try:
            report = solve(problem, config)
        except Exception:
            log.exception("solve failed for %s", problem.name or "<unnamed>")
            report = _failure_report(problem, time.monotonic() - start)
        reports.append(report)
        if csv_path is not None:
            write_csv_row(report, csv_path)
    return reports, sgm([r.time_total_s for r in reports], shift)
