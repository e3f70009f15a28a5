import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings as hsettings, strategies as st

from ppamodel.qp import (
    OPTIMAL,
    INFEASIBLE,
    UNBOUNDED,
    BruteForceTooLarge,
    QpInputError,
    QpProblem,
    SolverSettings,
    brute_force_qp,
    check_kkt,
    solve_qp,
)

INF = np.inf


def make_qp(q, c2, a=None, rl=None, ru=None, vl=None, vu=None):
    q = np.atleast_1d(np.asarray(q, dtype=float))
    n = len(q)
    c2 = np.broadcast_to(np.asarray(c2, dtype=float), (n,))
    if a is None:
        a = sp.csc_matrix((0, n))
        rl = np.zeros(0)
        ru = np.zeros(0)
    else:
        a = sp.csc_matrix(np.atleast_2d(np.asarray(a, dtype=float)))
        rl = np.atleast_1d(np.asarray(rl, dtype=float))
        ru = np.atleast_1d(np.asarray(ru, dtype=float))
    vl = np.full(n, -INF) if vl is None else np.broadcast_to(np.asarray(vl, dtype=float), (n,)).copy()
    vu = np.full(n, INF) if vu is None else np.broadcast_to(np.asarray(vu, dtype=float), (n,)).copy()
    return QpProblem(n, q, np.array(c2), a, rl, ru, vl, vu)


def random_feasible_qp(rng, n_max=6, m_max=6, strictly_convex=True):
    """Random convex QP guaranteed feasible: bounds/rows framed around x0."""
    n = rng.integers(1, n_max + 1)
    m = rng.integers(0, m_max + 1)
    x0 = rng.normal(size=n)
    q = rng.normal(size=n) * 2
    if strictly_convex:
        c2 = rng.uniform(0.1, 2.0, size=n)
    else:
        c2 = np.where(rng.random(n) < 0.5, 0.0, rng.uniform(0.1, 2.0, size=n))
    vl = np.where(rng.random(n) < 0.7, x0 - rng.uniform(0.05, 2.0, size=n), -INF)
    vu = np.where(rng.random(n) < 0.7, x0 + rng.uniform(0.05, 2.0, size=n), INF)
    if not strictly_convex:
        # keep the feasible set bounded so an optimum exists
        vl = np.where(np.isfinite(vl), vl, x0 - 3.0)
        vu = np.where(np.isfinite(vu), vu, x0 + 3.0)
    if m:
        a = rng.normal(size=(m, n))
        a[np.abs(a) < 0.05] = 0.1  # keep rows nonzero
        ax0 = a @ x0
        kind = rng.random(m)
        rl = np.where(kind < 0.3, ax0, -INF)
        ru = np.where(kind < 0.3, ax0, ax0 + rng.uniform(0.05, 1.0, size=m))
        two_sided = (kind >= 0.3) & (kind < 0.6)
        rl = np.where(two_sided, ax0 - rng.uniform(0.05, 1.0, size=m), rl)
        ru = np.where(two_sided, ax0 + rng.uniform(0.05, 1.0, size=m), ru)
        upper_only = kind >= 0.6
        ru = np.where(upper_only, ax0 + rng.uniform(0.05, 1.0, size=m), ru)
    else:
        a, rl, ru = None, None, None
    return make_qp(q, c2, a, rl, ru, vl, vu)


class TestSolveBasics:
    def test_active_lower_bound(self):
        # min x^2 s.t. x >= 1
        prob = make_qp([0.0], [1.0], vl=[1.0])
        sol = solve_qp(prob)
        assert sol.status == OPTIMAL
        assert sol.primal[0] == pytest.approx(1.0, abs=1e-7)
        # stationarity 2x - mu = 0 at x=1
        assert sol.dual_bounds_lower[0] == pytest.approx(2.0, abs=1e-6)

    def test_two_tech_equality(self):
        # min 10 x1 + 30 x2  s.t. x1 + x2 = 75, 0 <= xi <= 50
        prob = make_qp([10.0, 30.0], [0.0, 0.0], a=[[1.0, 1.0]], rl=[75.0], ru=[75.0],
                       vl=[0.0, 0.0], vu=[50.0, 50.0])
        sol = solve_qp(prob)
        assert sol.status == OPTIMAL
        np.testing.assert_allclose(sol.primal, [50.0, 25.0], atol=1e-6)
        assert abs(sol.dual_general[0]) == pytest.approx(30.0, abs=1e-6)
        assert sol.objective_value == pytest.approx(1250.0, abs=1e-5)

    def test_infeasible_box(self):
        # x <= 0 and x >= 1
        prob = make_qp([0.0], [1.0], a=[[1.0]], rl=[-INF], ru=[0.0], vl=[1.0])
        sol = solve_qp(prob)
        assert sol.status == INFEASIBLE

    def test_unbounded(self):
        prob = make_qp([-1.0], [0.0], vl=[0.0])
        sol = solve_qp(prob)
        assert sol.status == UNBOUNDED

    def test_objective_matches_reevaluation(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            prob = random_feasible_qp(rng)
            sol = solve_qp(prob)
            assert sol.status == OPTIMAL
            expect = prob.objective_value(sol.primal)
            assert sol.objective_value == pytest.approx(expect, rel=1e-9, abs=1e-12)

    def test_invalid_inputs(self):
        with pytest.raises(QpInputError):
            make_qp([0.0], [-1.0])  # negative curvature
        with pytest.raises(QpInputError):
            make_qp([0.0], [1.0], vl=[2.0], vu=[1.0])  # crossed bounds
        with pytest.raises(QpInputError):
            QpProblem(1, np.zeros(1), np.zeros(1), sp.csc_matrix(np.zeros((1, 1))),
                      np.zeros(1), np.zeros(1), np.array([-INF]), np.array([INF]))


class TestBruteForce:
    def test_unconstrained_quadratic(self):
        # min x^2 - 2x -> x = 1, objective -1
        prob = make_qp([-2.0], [1.0])
        sol = brute_force_qp(prob)
        assert sol.status == OPTIMAL
        assert sol.primal[0] == pytest.approx(1.0, abs=1e-10)
        assert sol.objective_value == pytest.approx(-1.0, abs=1e-10)

    def test_box_projection(self):
        # min (x-3)^2 with x in [0, 2] -> x = 2 at the upper bound
        prob = make_qp([-6.0], [1.0], vl=[0.0], vu=[2.0])
        sol = brute_force_qp(prob)
        assert sol.primal[0] == pytest.approx(2.0, abs=1e-10)
        assert sol.dual_bounds_upper[0] > 0

    def test_matches_solver_on_dispatch_lp(self):
        prob = make_qp([10.0, 30.0], [0.0, 0.0], a=[[1.0, 1.0]], rl=[75.0], ru=[75.0],
                       vl=[0.0, 0.0], vu=[50.0, 50.0])
        bf = brute_force_qp(prob)
        sol = solve_qp(prob)
        np.testing.assert_allclose(bf.primal, sol.primal, atol=1e-8)
        np.testing.assert_allclose(bf.dual_general, sol.dual_general, atol=1e-8)

    def test_infeasible(self):
        prob = make_qp([0.0], [1.0], a=[[1.0]], rl=[-INF], ru=[0.0], vl=[1.0])
        assert brute_force_qp(prob).status == INFEASIBLE

    def test_too_large(self):
        n = 15
        prob = make_qp(np.zeros(n), np.ones(n),
                       a=np.ones((6, n)), rl=np.zeros(6), ru=np.ones(6))
        with pytest.raises(BruteForceTooLarge):
            brute_force_qp(prob)


class TestOracleAgreement:
    @pytest.mark.parametrize("strictly_convex", [True, False])
    def test_random_agreement(self, strictly_convex):
        rng = np.random.default_rng(42 if strictly_convex else 43)
        for _ in range(60):
            prob = random_feasible_qp(rng, strictly_convex=strictly_convex)
            bf = brute_force_qp(prob)
            sol = solve_qp(prob)
            assert bf.status == OPTIMAL
            assert sol.status == OPTIMAL
            assert sol.objective_value == pytest.approx(bf.objective_value, abs=1e-6)
            if strictly_convex:
                np.testing.assert_allclose(sol.primal, bf.primal, atol=1e-5)

    def test_kkt_passes_on_solver_output(self):
        rng = np.random.default_rng(11)
        s = SolverSettings()
        for _ in range(40):
            prob = random_feasible_qp(rng)
            sol = solve_qp(prob, s)
            report = check_kkt(prob, sol, tol=10 * s.abs_tol)
            assert report.passed(10 * s.abs_tol), report


class TestCheckKkt:
    def _solved_pair(self):
        prob = make_qp([10.0, 30.0], [0.0, 0.0], a=[[1.0, 1.0]], rl=[75.0], ru=[75.0],
                       vl=[0.0, 0.0], vu=[50.0, 50.0])
        return prob, solve_qp(prob)

    def test_clean_solution_passes(self):
        prob, sol = self._solved_pair()
        report = check_kkt(prob, sol, tol=1e-6)
        assert report.passed(1e-6)

    def test_perturbed_primal_fails(self):
        from dataclasses import replace
        prob, sol = self._solved_pair()
        bad = replace(sol, primal=sol.primal + np.array([1.0, 0.0]))
        report = check_kkt(prob, bad, tol=1e-6)
        assert max(report.primal_inf_norm, report.complementarity_inf_norm) > 1e-6

    def test_wrong_dual_sign_flagged(self):
        from dataclasses import replace
        prob, sol = self._solved_pair()
        bad = replace(sol, dual_bounds_upper=sol.dual_bounds_upper - 5.0)
        report = check_kkt(prob, bad, tol=1e-6)
        assert report.dual_feasibility_inf_norm > 1e-6

    def test_dimension_mismatch(self):
        from dataclasses import replace
        prob, sol = self._solved_pair()
        with pytest.raises(QpInputError):
            check_kkt(prob, replace(sol, primal=np.zeros(3)), tol=1e-6)


class TestScalingProperty:
    @given(gamma=st.floats(min_value=0.1, max_value=50.0), seed=st.integers(0, 1000))
    @hsettings(max_examples=25, deadline=None)
    def test_objective_scaling_scales_duals(self, gamma, seed):
        rng = np.random.default_rng(seed)
        prob = random_feasible_qp(rng)
        scaled = QpProblem(
            prob.n_vars,
            gamma * prob.objective_linear,
            gamma * prob.objective_quadratic_diag,
            prob.a_matrix,
            prob.row_lower, prob.row_upper, prob.var_lower, prob.var_upper,
        )
        sol = solve_qp(prob)
        sol_g = solve_qp(scaled)
        assert sol.status == OPTIMAL and sol_g.status == OPTIMAL
        np.testing.assert_allclose(sol_g.primal, sol.primal, atol=1e-6)
        np.testing.assert_allclose(sol_g.dual_general, gamma * sol.dual_general, atol=1e-5)
        np.testing.assert_allclose(
            sol_g.dual_bounds_lower, gamma * sol.dual_bounds_lower, atol=1e-5)
        np.testing.assert_allclose(
            sol_g.dual_bounds_upper, gamma * sol.dual_bounds_upper, atol=1e-5)
