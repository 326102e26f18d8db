"""Standardized KKT error metrics and the benchmark time aggregator.

The three errors follow the conventions used for cross-solver comparison:

    primal infeasibility   ||A(X) - b||_2 / (1 + ||b||)      (norm selectable)
    dual infeasibility     |min(0, eigmin(C - A*(y)))| / (1 + ||vec(C)||_1)
    primal-dual gap        (<C, X> - y^T b) / (1 + |<C, X>| + |y^T b|)

``y`` is the multiplier of the conic-dual form (max b^T y s.t. C - A*(y) PSD);
the solver's internal splitting multiplier enters these formulas negated.
``||vec(C)||_1`` flattens the full matrix, so off-diagonals count twice.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .model import SdpProblem, apply_A, objective_value

log = logging.getLogger(__name__)

__all__ = [
    "ErrorTriple", "error_triple", "primal_infeasibility",
    "dual_infeasibility", "pd_gap", "slack_matrix", "lanczos_smallest",
    "sgm", "ssgm",
]

_NORMS = {"inf_norm": np.inf, "one_norm": 1, "two_norm": 2}


@dataclass(frozen=True)
class ErrorTriple:
    primal_infeas: float
    dual_infeas: float
    pd_gap: float

    def __post_init__(self):
        if self.primal_infeas < 0 or self.dual_infeas < 0:
            raise ValueError("infeasibility components must be nonnegative")


def primal_infeasibility(problem: SdpProblem, U, V,
                         normalization: str = "inf_norm") -> float:
    """||A(U V^T) - b||_2 over 1 plus the selected norm of b."""
    if normalization not in _NORMS:
        raise ValueError(f"unknown normalization {normalization!r}")
    res = apply_A(problem, U, V) - problem.rhs
    denom = 1.0 + float(np.linalg.norm(problem.rhs, ord=_NORMS[normalization]))
    return float(np.linalg.norm(res)) / denom


def slack_matrix(problem: SdpProblem, y) -> sp.csr_matrix:
    """C - sum_i y_i A_i as a sparse matrix."""
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (problem.m,):
        raise ValueError(f"y has shape {y.shape}, expected ({problem.m},)")
    return (problem.objective_csr - problem._kernel.adjoint_csr(y)).tocsr()


def lanczos_smallest(matrix: sp.spmatrix, max_iter: Optional[int] = None,
                     tol: float = 1e-9,
                     seed: int = 0x5EED) -> tuple[float, bool]:
    """Smallest eigenvalue of a symmetric sparse matrix.

    Runs Lanczos with full reorthogonalization on the negated matrix and
    returns the negated largest Ritz value, plus a convergence flag from the
    standard residual bound.  The start vector is drawn from a fixed-seed
    generator so repeated calls are reproducible.
    """
    n = matrix.shape[0]
    if n == 1:
        return float(matrix[0, 0]), True
    if max_iter is None:
        max_iter = min(n, math.ceil(5.0 * math.sqrt(n)))
    max_iter = min(max(max_iter, 2), n)
    rng = np.random.default_rng(seed)

    Q = np.zeros((n, max_iter))
    alphas = np.zeros(max_iter)
    betas = np.zeros(max_iter)
    q = rng.standard_normal(n)
    q /= np.linalg.norm(q)
    Q[:, 0] = q
    beta = 0.0
    q_prev = np.zeros(n)
    theta = None
    theta_prev = None
    stagnant = 0

    k = 0
    for k in range(max_iter):
        u = -(matrix @ Q[:, k])
        alpha = float(Q[:, k] @ u)
        alphas[k] = alpha
        r = u - alpha * Q[:, k] - beta * q_prev
        # full reorthogonalization against every kept vector
        r -= Q[:, : k + 1] @ (Q[:, : k + 1].T @ r)

        vals, vecs = scipy.linalg.eigh_tridiagonal(
            alphas[: k + 1], betas[:k], select="i", select_range=(k, k))
        theta = float(vals[0])
        beta = float(np.linalg.norm(r))
        resid_bound = beta * abs(float(vecs[-1, 0]))
        if resid_bound <= tol * max(1.0, abs(theta)):
            return -theta, True
        # clustered spectra keep the vector residual large long after the
        # value has settled; a stagnation window covers that case
        if theta_prev is not None and abs(theta - theta_prev) <= tol * max(1.0, abs(theta)):
            stagnant += 1
            if stagnant >= 5:
                return -theta, True
        else:
            stagnant = 0
        theta_prev = theta
        if k + 1 == max_iter:
            break
        if beta <= 1e-14 * max(1.0, abs(theta)):
            # invariant subspace; restart orthogonally to continue the sweep
            fresh = rng.standard_normal(n)
            fresh -= Q[:, : k + 1] @ (Q[:, : k + 1].T @ fresh)
            norm = np.linalg.norm(fresh)
            if norm <= 1e-14:
                return -theta, True
            q_prev = Q[:, k]
            Q[:, k + 1] = fresh / norm
            betas[k] = 0.0
            beta = 0.0
        else:
            q_prev = Q[:, k]
            Q[:, k + 1] = r / beta
            betas[k] = beta

    log.debug("Lanczos stopped at %d iterations without meeting tol %.1e", k + 1, tol)
    return -theta, False


def dual_infeasibility(problem: SdpProblem, y) -> float:
    """Negative part of the smallest slack eigenvalue, scaled by 1 + ||vec(C)||_1."""
    slack = slack_matrix(problem, y)
    eigmin, converged = lanczos_smallest(slack)
    if not converged:
        log.info("dual infeasibility uses an unconverged eigenvalue estimate")
    return abs(min(0.0, eigmin)) / (1.0 + problem.objective.vec_one_norm())


def pd_gap(problem: SdpProblem, U, V, y) -> float:
    """(<C, U V^T> - y^T b) / (1 + |<C, U V^T>| + |y^T b|)."""
    y = np.asarray(y, dtype=np.float64)
    obj = objective_value(problem, U, V)
    dual = float(y @ problem.rhs)
    return (obj - dual) / (1.0 + abs(obj) + abs(dual))


def error_triple(problem: SdpProblem, U, V, y,
                 normalization: str = "inf_norm") -> ErrorTriple:
    """All three standardized errors at (U V^T, y) in one call."""
    return ErrorTriple(
        primal_infeas=primal_infeasibility(problem, U, V, normalization),
        dual_infeas=dual_infeasibility(problem, y),
        pd_gap=pd_gap(problem, U, V, y),
    )


def sgm(times: Sequence[float], shift: float = 10.0) -> float:
    """Shifted geometric mean: exp(mean(log(max(1, t + s)))) - s."""
    t = np.asarray(times, dtype=np.float64)
    if t.size == 0:
        raise ValueError("sgm of an empty sequence")
    if np.any(t < 0):
        raise ValueError("times must be nonnegative")
    shifted = np.maximum(1.0, t + shift)
    if np.all(shifted == shifted[0]):
        # geometric mean of equal values, exactly
        return float(shifted[0] - shift)
    return float(np.exp(np.mean(np.log(shifted))) - shift)


def ssgm(times_by_solver: dict, shift: float = 10.0) -> dict:
    """Each solver's SGM scaled by the smallest one."""
    means = {k: sgm(v, shift) for k, v in times_by_solver.items()}
    best = min(means.values())
    if best <= 0:
        return {k: (1.0 if v == best else math.inf) for k, v in means.items()}
    return {k: v / best for k, v in means.items()}
