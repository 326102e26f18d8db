import numpy as np
import pytest

from lorank.admm import (
    CgBreakdownError, CgResult, SplitState, admm_sweep, aug_lagrangian,
    cg_solve, check_termination, normal_operator_apply, penalty_schedule,
    subproblem_rhs, termination_terms,
)
from lorank.model import (
    SdpProblem, SparseSymMatrix, apply_A, apply_A_adjoint_times,
)
from conftest import random_problem


def dense_operator_matrix(problem, W, rho, gamma):
    """Explicit (n r) x (n r) matrix of the U-step normal operator."""
    n, r = W.shape
    dim = n * r
    M = gamma * np.eye(dim)
    for A in problem.constraints:
        v = (A.to_dense() @ W).reshape(-1)   # vec(A_i W), row-major
        M += rho * np.outer(v, v)
    return M


class TestNormalOperator:
    def test_rho_zero_is_scaling(self, rng):
        prob = random_problem(rng, 5, 3)
        W = rng.standard_normal((5, 2))
        X = rng.standard_normal((5, 2))
        np.testing.assert_allclose(
            normal_operator_apply(prob, W, 0.0, 2.5, X), 2.5 * X)

    def test_rank_one_closed_form(self):
        # single constraint A = I, unit W, r = 1: operator(W) = (gamma + rho) W
        prob = SdpProblem(
            n=3, m=1, objective=SparseSymMatrix.from_entries(3, []),
            constraints=(SparseSymMatrix.identity(3),), rhs=np.array([1.0]))
        W = np.array([[1.0], [0.0], [0.0]])
        out = normal_operator_apply(prob, W, 2.0, 3.0, W)
        np.testing.assert_allclose(out, 5.0 * W)

    def test_matches_dense_operator(self, rng):
        for n, r in ((4, 1), (6, 2), (3, 2)):
            prob = random_problem(rng, n, 3)
            W = rng.standard_normal((n, r))
            X = rng.standard_normal((n, r))
            M = dense_operator_matrix(prob, W, 1.7, 0.9)
            expected = (M @ X.reshape(-1)).reshape(n, r)
            np.testing.assert_allclose(
                normal_operator_apply(prob, W, 1.7, 0.9, X), expected,
                rtol=1e-10, atol=1e-12)

    def test_spd_certificate(self, rng):
        prob = random_problem(rng, 6, 4)
        W = rng.standard_normal((6, 2))
        gamma = 0.8
        for _ in range(100):
            X = rng.standard_normal((6, 2))
            quad = float(np.vdot(X, normal_operator_apply(prob, W, 2.0, gamma, X)))
            assert quad >= gamma * np.vdot(X, X) - 1e-10


class TestSubproblemRhs:
    def test_bare_gamma_term(self, rng):
        prob = SdpProblem(
            n=4, m=1, objective=SparseSymMatrix.from_entries(4, []),
            constraints=(SparseSymMatrix.identity(4),), rhs=np.array([0.0]))
        W = rng.standard_normal((4, 2))
        np.testing.assert_allclose(
            subproblem_rhs(prob, W, np.zeros(1), 2.0, 1.5), 1.5 * W)

    def test_multiplier_cancels_penalty_term(self, rng):
        prob = random_problem(rng, 5, 3)
        W = rng.standard_normal((5, 2))
        rho = 2.0
        lam = rho * prob.rhs            # lam_i = rho b_i
        out = subproblem_rhs(prob, W, lam, rho, 0.7)
        expected = -(prob.objective_csr @ W - 0.7 * W)
        np.testing.assert_allclose(out, expected, atol=1e-12)

    def test_matches_dense_formula(self, rng):
        prob = random_problem(rng, 6, 4)
        W = rng.standard_normal((6, 2))
        lam = rng.standard_normal(4)
        rho, gamma = 1.3, 0.4
        C = prob.objective.to_dense()
        Astack = [A.to_dense() for A in prob.constraints]
        dense = -(C @ W - gamma * W
                  + sum(l * A @ W for l, A in zip(lam, Astack))
                  - rho * sum(b * A @ W for b, A in zip(prob.rhs, Astack)))
        np.testing.assert_allclose(
            subproblem_rhs(prob, W, lam, rho, gamma), dense, rtol=1e-10)


class TestCgSolve:
    def test_exact_warm_start_zero_iterations(self, rng):
        prob = random_problem(rng, 5, 3)
        W = rng.standard_normal((5, 2))
        op = lambda X: normal_operator_apply(prob, W, 1.0, 2.0, X)
        x_true = rng.standard_normal((5, 2))
        result = cg_solve(op, op(x_true), x_true, tol=1e-8, max_iter=50)
        assert result.iters == 0 and result.converged
        np.testing.assert_array_equal(result.x, x_true)

    def test_identity_operator_one_iteration(self, rng):
        gamma = 4.0
        op = lambda X: gamma * X
        rhs = rng.standard_normal((3, 2))
        result = cg_solve(op, rhs, np.zeros((3, 2)), tol=1e-10, max_iter=10)
        assert result.iters == 1 and result.converged
        np.testing.assert_allclose(result.x, rhs / gamma)

    def test_matches_dense_solve(self, rng):
        for n, r in ((4, 2), (6, 2), (4, 3)):   # n*r <= 12
            prob = random_problem(rng, n, 3)
            W = rng.standard_normal((n, r))
            rho, gamma = 1.2, 0.8
            M = dense_operator_matrix(prob, W, rho, gamma)
            rhs = rng.standard_normal((n, r))
            expected = np.linalg.solve(M, rhs.reshape(-1)).reshape(n, r)
            result = cg_solve(
                lambda X: normal_operator_apply(prob, W, rho, gamma, X),
                rhs, np.zeros((n, r)), tol=1e-12, max_iter=200)
            assert result.converged
            np.testing.assert_allclose(result.x, expected, atol=1e-8)

    def test_max_iter_flagged(self, rng):
        prob = random_problem(rng, 6, 4)
        W = rng.standard_normal((6, 3))
        rhs = rng.standard_normal((6, 3))
        result = cg_solve(
            lambda X: normal_operator_apply(prob, W, 10.0, 0.1, X),
            rhs, np.zeros((6, 3)), tol=1e-14, max_iter=1)
        assert not result.converged and result.iters == 1

    def test_breakdown_raises_with_iteration(self):
        op = lambda X: -X   # negative definite: p^T M p < 0 at once
        with pytest.raises(CgBreakdownError) as err:
            cg_solve(op, np.ones((2, 1)), np.zeros((2, 1)), tol=1e-8, max_iter=5)
        assert err.value.iteration == 1

    def test_warm_start_never_slower_in_median(self, rng):
        # previous-iterate warm starts vs cold starts over sweep-generated systems
        warm_counts, cold_counts = [], []
        trials = 0
        while len(warm_counts) < 50:
            prob = random_problem(rng, int(rng.integers(4, 9)), int(rng.integers(2, 6)))
            n = prob.n
            state = SplitState(
                U=rng.standard_normal((n, 2)), V=rng.standard_normal((n, 2)),
                lam=rng.standard_normal(prob.m), rho=2.0, gamma=1.0)
            for _ in range(3):
                V = state.V
                op = lambda X: normal_operator_apply(prob, V, state.rho, state.gamma, X)
                rhs = subproblem_rhs(prob, V, state.lam, state.rho, state.gamma)
                warm = cg_solve(op, rhs, state.U, tol=1e-8, max_iter=400)
                cold = cg_solve(op, rhs, np.zeros_like(state.U), tol=1e-8, max_iter=400)
                warm_counts.append(warm.iters)
                cold_counts.append(cold.iters)
                admm_sweep(prob, state)
            trials += 1
        assert np.median(warm_counts) <= np.median(cold_counts)


class TestSweep:
    def feasibility_fixed_point(self):
        prob = SdpProblem(
            n=3, m=1, objective=SparseSymMatrix.from_entries(3, []),
            constraints=(SparseSymMatrix.identity(3),), rhs=np.array([1.0]))
        U = np.array([[1.0], [0.0], [0.0]])
        return prob, SplitState(U=U.copy(), V=U.copy(), lam=np.zeros(1),
                                rho=2.0, gamma=1.0)

    def test_fixed_point_is_stationary(self):
        prob, state = self.feasibility_fixed_point()
        U0, V0, lam0 = state.U.copy(), state.V.copy(), state.lam.copy()
        diag = admm_sweep(prob, state, cg_tol=1e-10)
        assert diag.du <= 1e-8 and diag.dv <= 1e-8
        np.testing.assert_allclose(state.U, U0, atol=1e-8)
        np.testing.assert_array_equal(state.lam, lam0)

    def test_dual_step_identity_bitwise(self, rng):
        prob = random_problem(rng, 5, 3)
        state = SplitState(
            U=rng.standard_normal((5, 2)), V=rng.standard_normal((5, 2)),
            lam=rng.standard_normal(3), rho=2.0, gamma=1.5)
        lam_before = state.lam.copy()
        admm_sweep(prob, state)
        residual = apply_A(prob, state.U, state.V) - prob.rhs
        np.testing.assert_array_equal(state.lam - lam_before, state.rho * residual)
        np.testing.assert_array_equal(state.residual, residual)

    def test_u_step_stationarity_residual(self, rng):
        # first-order condition of the U subproblem, evaluated independently
        cg_tol = 1e-8
        for _ in range(5):
            prob = random_problem(rng, int(rng.integers(4, 8)), int(rng.integers(2, 6)))
            n = prob.n
            state = SplitState(
                U=rng.standard_normal((n, 2)), V=rng.standard_normal((n, 2)),
                lam=rng.standard_normal(prob.m), rho=1.5, gamma=1.0)
            V, lam, rho, gamma = state.V.copy(), state.lam.copy(), state.rho, state.gamma
            rhs = subproblem_rhs(prob, V, lam, rho, gamma)
            admm_sweep(prob, state, cg_tol=cg_tol)
            U_new = state.U
            t = apply_A(prob, U_new, V) - prob.rhs
            stationarity = (prob.objective_csr @ V
                            + gamma * (U_new - V)
                            + apply_A_adjoint_times(prob, lam, V)
                            + apply_A_adjoint_times(prob, rho * t, V))
            bound = 10.0 * cg_tol * (1.0 + np.linalg.norm(rhs))
            assert np.linalg.norm(stationarity) <= bound

    def test_dual_ascent_increases_lagrangian_by_identity(self, rng):
        # value difference across the dual step equals ||dlam||^2 / rho
        for _ in range(5):
            prob = random_problem(rng, 6, 4)
            state = SplitState(
                U=rng.standard_normal((6, 2)), V=rng.standard_normal((6, 2)),
                lam=rng.standard_normal(4), rho=2.5, gamma=1.2)
            lam_old = state.lam.copy()
            admm_sweep(prob, state)
            after = aug_lagrangian(prob, state.U, state.V, state.lam,
                                   state.rho, state.gamma)
            before = aug_lagrangian(prob, state.U, state.V, lam_old,
                                    state.rho, state.gamma)
            dlam = state.lam - lam_old
            expected = float(dlam @ dlam) / state.rho
            assert after - before == pytest.approx(expected, rel=1e-8)

    def test_primal_steps_decrease_lagrangian(self, rng):
        cg_tol = 1e-10
        for _ in range(5):
            prob = random_problem(rng, 6, 3)
            state = SplitState(
                U=rng.standard_normal((6, 2)), V=rng.standard_normal((6, 2)),
                lam=rng.standard_normal(3), rho=2.0, gamma=1.5)
            U0, V0, lam0 = state.U.copy(), state.V.copy(), state.lam.copy()
            before = aug_lagrangian(prob, U0, V0, lam0, state.rho, state.gamma)
            diag = admm_sweep(prob, state, cg_tol=cg_tol)
            mid = aug_lagrangian(prob, state.U, state.V, lam0,
                                 state.rho, state.gamma)
            slack = 10.0 * cg_tol * (1.0 + abs(mid))
            decrease_bound = 0.5 * state.gamma * (diag.du ** 2 + diag.dv ** 2)
            assert mid - before <= -decrease_bound + slack


class TestPenaltySchedule:
    def test_growth_on_fifth_iteration(self):
        assert penalty_schedule(100.0, 5) == pytest.approx(120.0)

    def test_cap(self):
        assert penalty_schedule(4900.0, 10) == 5000.0

    def test_off_cycle_unchanged(self):
        assert penalty_schedule(77.0, 3) == 77.0

    def test_sequence_formula(self):
        rho = 1.0
        for k in range(1, 101):
            rho = penalty_schedule(rho, k)
            assert rho == pytest.approx(min(1.2 ** (k // 5), 5000.0))

    def test_rejects_iteration_zero(self):
        with pytest.raises(ValueError):
            penalty_schedule(1.0, 0)


class TestTermination:
    def test_exactly_feasible_true_for_any_eps(self):
        prob = SdpProblem(
            n=2, m=1, objective=SparseSymMatrix.from_entries(2, []),
            constraints=(SparseSymMatrix.identity(2),), rhs=np.array([1.0]))
        U = np.array([[1.0], [0.0]])
        state = SplitState(U=U, V=U.copy(), lam=np.zeros(1), rho=1.0, gamma=1.0)
        assert check_termination(prob, state, U.copy(), 1e-300)

    def test_zero_rhs_arithmetic(self):
        # b = 0, residual 2e-5, eps 1e-5 -> not terminated
        prob = SdpProblem(
            n=1, m=1, objective=SparseSymMatrix.from_entries(1, []),
            constraints=(SparseSymMatrix.identity(1),), rhs=np.array([0.0]))
        x = np.sqrt(2e-5)
        U = np.array([[x]])
        state = SplitState(U=U, V=U.copy(), lam=np.zeros(1), rho=1.0, gamma=1.0)
        primal, _ = termination_terms(prob, state, U.copy())
        assert primal == pytest.approx(2e-5, rel=1e-10)
        assert not check_termination(prob, state, U.copy(), 1e-5)

    def test_prox_term_scaling(self, rng):
        prob = random_problem(rng, 4, 2)
        U = rng.standard_normal((4, 2))
        prev_V = rng.standard_normal((4, 2))
        state = SplitState(U=U, V=U.copy(), lam=np.zeros(2), rho=1.0, gamma=3.0)
        _, prox = termination_terms(prob, state, prev_V)
        expected = 3.0 * np.linalg.norm(state.V - prev_V) / (1.0 + np.linalg.norm(prev_V))
        assert prox == pytest.approx(expected, rel=1e-12)


class TestSplitState:
    def test_rejects_rank_above_order(self, rng):
        with pytest.raises(ValueError):
            SplitState(U=np.ones((2, 3)), V=np.ones((2, 3)),
                       lam=np.zeros(1), rho=1.0, gamma=1.0)

    def test_rejects_shape_mismatch(self):
        from lorank.model import DimensionMismatchError
        with pytest.raises(DimensionMismatchError):
            SplitState(U=np.ones((3, 1)), V=np.ones((3, 2)),
                       lam=np.zeros(1), rho=1.0, gamma=1.0)

    def test_rejects_nonpositive_penalties(self):
        with pytest.raises(ValueError):
            SplitState(U=np.ones((2, 1)), V=np.ones((2, 1)),
                       lam=np.zeros(1), rho=0.0, gamma=1.0)
