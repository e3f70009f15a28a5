"""Sparse convex QP solver with dual recovery.

Solves

    min  c1'x + sum_i c2_i * x_i^2
    s.t. row_lower <= A x <= row_upper      (equality rows have equal bounds)
         var_lower <=   x <= var_upper

with a diagonal (separable) quadratic objective. The solver is an
operator-splitting (ADMM) iteration with Ruiz equilibration, adaptive
step size and an active-set polish step for high-accuracy solutions.

Sign conventions (used everywhere in this package):

    stationarity   c1 + 2*c2*x + A' lam + mu_up - mu_lo = 0

so the multiplier ``lam`` of a general row is >= 0 when the row's upper
bound is active and <= 0 when its lower bound is active, and the bound
multipliers ``mu_lo``, ``mu_up`` are both >= 0. Market-facing code flips
signs where a "shadow value" convention is wanted; that mapping lives in
one place (`negate` on the caller side), not here.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "QpProblem",
    "QpSolution",
    "SolverSettings",
    "KktReport",
    "QpInputError",
    "solve_qp",
    "check_kkt",
    "brute_force_qp",
]

OPTIMAL = "Optimal"
INFEASIBLE = "Infeasible"
UNBOUNDED = "Unbounded"
ITER_LIMIT = "IterLimit"


class QpInputError(ValueError):
    """Malformed problem data (dimension mismatch, non-convexity, bad bounds)."""


@dataclass(frozen=True)
class QpProblem:
    """Convex QP with diagonal Hessian, general linear rows and variable bounds.

    Objective is ``objective_linear @ x + objective_quadratic_diag @ x**2``
    (note: no 1/2 factor; the quadratic coefficients multiply x_i^2 directly).
    """

    n_vars: int
    objective_linear: np.ndarray
    objective_quadratic_diag: np.ndarray
    a_matrix: sp.csc_matrix  # (m, n); m may be 0
    row_lower: np.ndarray
    row_upper: np.ndarray
    var_lower: np.ndarray
    var_upper: np.ndarray

    def __post_init__(self):
        n = self.n_vars
        q = np.asarray(self.objective_linear, dtype=float)
        d = np.asarray(self.objective_quadratic_diag, dtype=float)
        if q.shape != (n,) or d.shape != (n,):
            raise QpInputError(f"objective vectors must have shape ({n},)")
        if np.any(d < 0):
            raise QpInputError("quadratic diagonal must be >= 0 (convexity)")
        a = sp.csc_matrix(self.a_matrix)
        if a.shape[1] != n:
            raise QpInputError(f"A has {a.shape[1]} columns, expected {n}")
        m = a.shape[0]
        rl = np.asarray(self.row_lower, dtype=float)
        ru = np.asarray(self.row_upper, dtype=float)
        vl = np.asarray(self.var_lower, dtype=float)
        vu = np.asarray(self.var_upper, dtype=float)
        if rl.shape != (m,) or ru.shape != (m,):
            raise QpInputError("row bounds must match number of rows")
        if vl.shape != (n,) or vu.shape != (n,):
            raise QpInputError("variable bounds must match number of variables")
        if np.any(rl > ru) or np.any(vl > vu):
            raise QpInputError("lower bound exceeds upper bound")
        if m:
            nnz_per_row = np.diff(sp.csr_matrix(a).indptr)
            if np.any(nnz_per_row == 0):
                raise QpInputError("every general row must have at least one nonzero")
        object.__setattr__(self, "objective_linear", q)
        object.__setattr__(self, "objective_quadratic_diag", d)
        object.__setattr__(self, "a_matrix", a)
        object.__setattr__(self, "row_lower", rl)
        object.__setattr__(self, "row_upper", ru)
        object.__setattr__(self, "var_lower", vl)
        object.__setattr__(self, "var_upper", vu)

    @property
    def n_rows(self) -> int:
        return self.a_matrix.shape[0]

    def objective_value(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        return float(self.objective_linear @ x + self.objective_quadratic_diag @ (x * x))


@dataclass(frozen=True)
class SolverSettings:
    abs_tol: float = 1e-8
    rel_tol: float = 1e-8
    max_iterations: int = 200_000
    binding_tol: float = 1e-6  # used downstream for active-set detection
    # operator-splitting internals
    rho: float = 0.1
    sigma: float = 1e-6
    alpha: float = 1.6
    adaptive_rho: bool = True
    check_interval: int = 25
    polish: bool = True
    infeas_tol: float = 1e-7

    def __post_init__(self):
        if self.abs_tol <= 0 or self.rel_tol < 0 or self.binding_tol <= 0:
            raise QpInputError("tolerances must be positive")
        if self.max_iterations < 1:
            raise QpInputError("max_iterations must be >= 1")


@dataclass(frozen=True)
class KktResiduals:
    stationarity_inf_norm: float
    primal_inf_norm: float
    complementarity_inf_norm: float

    def max(self) -> float:
        return max(self.stationarity_inf_norm, self.primal_inf_norm,
                   self.complementarity_inf_norm)


@dataclass(frozen=True)
class QpSolution:
    status: str
    primal: np.ndarray
    dual_general: np.ndarray       # lam, one per general row
    dual_bounds_lower: np.ndarray  # mu_lo >= 0
    dual_bounds_upper: np.ndarray  # mu_up >= 0
    objective_value: float
    kkt_residuals: KktResiduals
    iterations: int = 0


@dataclass(frozen=True)
class KktReport:
    """Per-condition residuals of the KKT system at a candidate solution."""

    stationarity_inf_norm: float
    primal_inf_norm: float
    dual_feasibility_inf_norm: float
    complementarity_inf_norm: float

    def passed(self, tol: float) -> bool:
        return (self.stationarity_inf_norm <= tol
                and self.primal_inf_norm <= tol
                and self.dual_feasibility_inf_norm <= tol
                and self.complementarity_inf_norm <= tol)


# ---------------------------------------------------------------------------
# residual computation (shared by the solver, check_kkt and the tests)
# ---------------------------------------------------------------------------

def _kkt_residuals(problem: QpProblem, x, lam, mu_lo, mu_up):
    a = problem.a_matrix
    ax = a @ x if problem.n_rows else np.zeros(0)
    grad = problem.objective_linear + 2.0 * problem.objective_quadratic_diag * x
    stat = grad + mu_up - mu_lo
    if problem.n_rows:
        stat = stat + a.T @ lam
    stat_norm = float(np.max(np.abs(stat))) if len(stat) else 0.0

    prim = 0.0
    if problem.n_rows:
        prim = max(prim, _bound_violation(ax, problem.row_lower, problem.row_upper))
    prim = max(prim, _bound_violation(x, problem.var_lower, problem.var_upper))

    comp = 0.0
    if problem.n_rows:
        comp = max(comp, _complementarity(ax, lam, problem.row_lower, problem.row_upper))
    comp = max(comp, _complementarity(x, mu_up - mu_lo, problem.var_lower, problem.var_upper))
    return KktResiduals(stat_norm, float(prim), float(comp))


def _bound_violation(v, lower, upper):
    viol = 0.0
    finite_lo = np.isfinite(lower)
    finite_up = np.isfinite(upper)
    if np.any(finite_lo):
        viol = max(viol, float(np.max((lower - v)[finite_lo], initial=0.0)))
    if np.any(finite_up):
        viol = max(viol, float(np.max((v - upper)[finite_up], initial=0.0)))
    return viol


def _complementarity(v, dual, lower, upper):
    """max over rows of min(|dual side|, slack); equality rows contribute 0."""
    pos = np.maximum(dual, 0.0)
    neg = np.maximum(-dual, 0.0)
    slack_up = np.where(np.isfinite(upper), np.maximum(upper - v, 0.0), np.inf)
    slack_lo = np.where(np.isfinite(lower), np.maximum(v - lower, 0.0), np.inf)
    comp_up = np.minimum(pos, slack_up)
    comp_lo = np.minimum(neg, slack_lo)
    if len(comp_up) == 0:
        return 0.0
    return float(max(np.max(comp_up), np.max(comp_lo)))


def check_kkt(problem: QpProblem, solution: QpSolution, tol: float) -> KktReport:
    """Verify a primal/dual pair against the KKT system of `problem`.

    Dual feasibility checks the package sign convention: bound multipliers
    are nonnegative, and the multiplier of a one-sided row cannot push on
    the missing side (e.g. lam < 0 on a row with no finite lower bound).
    """
    x = np.asarray(solution.primal, dtype=float)
    lam = np.asarray(solution.dual_general, dtype=float)
    mu_lo = np.asarray(solution.dual_bounds_lower, dtype=float)
    mu_up = np.asarray(solution.dual_bounds_upper, dtype=float)
    if x.shape != (problem.n_vars,):
        raise QpInputError("primal dimension mismatch")
    if lam.shape != (problem.n_rows,):
        raise QpInputError("dual_general dimension mismatch")
    if mu_lo.shape != (problem.n_vars,) or mu_up.shape != (problem.n_vars,):
        raise QpInputError("bound dual dimension mismatch")

    res = _kkt_residuals(problem, x, lam, mu_lo, mu_up)

    dual_viol = float(max(np.max(-mu_lo, initial=0.0), np.max(-mu_up, initial=0.0)))
    if problem.n_rows:
        no_up = ~np.isfinite(problem.row_upper)
        no_lo = ~np.isfinite(problem.row_lower)
        if np.any(no_up):
            dual_viol = max(dual_viol, float(np.max(np.maximum(lam[no_up], 0.0), initial=0.0)))
        if np.any(no_lo):
            dual_viol = max(dual_viol, float(np.max(np.maximum(-lam[no_lo], 0.0), initial=0.0)))
    no_up_v = ~np.isfinite(problem.var_upper)
    no_lo_v = ~np.isfinite(problem.var_lower)
    if np.any(no_up_v):
        dual_viol = max(dual_viol, float(np.max(mu_up[no_up_v], initial=0.0)))
    if np.any(no_lo_v):
        dual_viol = max(dual_viol, float(np.max(mu_lo[no_lo_v], initial=0.0)))

    return KktReport(
        stationarity_inf_norm=res.stationarity_inf_norm,
        primal_inf_norm=res.primal_inf_norm,
        dual_feasibility_inf_norm=dual_viol,
        complementarity_inf_norm=res.complementarity_inf_norm,
    )


# ---------------------------------------------------------------------------
# operator-splitting solver
# ---------------------------------------------------------------------------

@dataclass
class _Work:
    """Scaled problem data plus the running ADMM state."""

    p_diag: np.ndarray      # scaled Hessian diagonal (includes the factor 2)
    q: np.ndarray
    a: sp.csc_matrix        # stacked [A; I], scaled
    lower: np.ndarray
    upper: np.ndarray
    d: np.ndarray           # variable scaling
    e: np.ndarray           # row scaling
    cost_scale: float
    sigma: float = 1e-6
    rho_vec: np.ndarray | None = field(default=None)
    solve: object = None    # factorized KKT


def _ruiz_equilibrate(p_diag, q, a, lower, upper, iterations=10):
    m, n = a.shape
    d = np.ones(n)
    e = np.ones(m)
    p = p_diag.copy()
    a = a.copy()
    q = q.copy()
    lower = lower.copy()
    upper = upper.copy()
    for _ in range(iterations):
        a = sp.csc_matrix(a)
        a_abs = sp.csc_matrix((np.abs(a.data), a.indices, a.indptr), shape=a.shape)
        col_norm_a = np.asarray(a_abs.max(axis=0).todense()).ravel() if m else np.zeros(n)
        col_norm = np.maximum(np.abs(p), col_norm_a)
        col_norm[col_norm == 0] = 1.0
        delta_d = 1.0 / np.sqrt(col_norm)
        row_norm = np.asarray(a_abs.max(axis=1).todense()).ravel() if m else np.zeros(0)
        row_norm[row_norm == 0] = 1.0
        delta_e = 1.0 / np.sqrt(row_norm)
        p *= delta_d * delta_d
        q *= delta_d
        a = sp.diags(delta_e) @ a @ sp.diags(delta_d)
        lower *= delta_e
        upper *= delta_e
        d *= delta_d
        e *= delta_e
    # cost normalization
    scale_terms = [np.mean(np.abs(p))] if np.any(p) else []
    qn = np.max(np.abs(q), initial=0.0)
    if qn > 0:
        scale_terms.append(qn)
    c = 1.0 / max(np.max(scale_terms, initial=0.0), 1e-12) if scale_terms else 1.0
    c = min(max(c, 1e-6), 1e6)
    return p * c, q * c, a, lower, upper, d, e, c


def _rho_vector(rho, lower, upper):
    eq = np.isfinite(lower) & np.isfinite(upper) & ((upper - lower) < 1e-12)
    rv = np.full(len(lower), rho)
    rv[eq] = rho * 1e3
    return np.clip(rv, 1e-6, 1e6)


def _factorize(work: _Work):
    kkt = sp.bmat(
        [
            [sp.diags(work.p_diag + work.sigma), work.a.T],
            [work.a, sp.diags(-1.0 / work.rho_vec)],
        ],
        format="csc",
    )
    work.solve = spla.factorized(kkt)


def solve_qp(problem: QpProblem, settings: SolverSettings | None = None) -> QpSolution:
    """Solve a convex QP, returning primal, duals and KKT residuals.

    Infeasible/unbounded problems are reported through ``status`` rather than
    exceptions; IterLimit returns the current iterate with its residuals.
    """
    settings = settings or SolverSettings()
    n = problem.n_vars
    m = problem.n_rows

    # stack general rows with an identity block for the variable bounds
    if m:
        a_full = sp.vstack([problem.a_matrix, sp.identity(n, format="csc")], format="csc")
        lower = np.concatenate([problem.row_lower, problem.var_lower])
        upper = np.concatenate([problem.row_upper, problem.var_upper])
    else:
        a_full = sp.identity(n, format="csc")
        lower = problem.var_lower.copy()
        upper = problem.var_upper.copy()

    p_orig = 2.0 * problem.objective_quadratic_diag
    q_orig = problem.objective_linear

    p_s, q_s, a_s, l_s, u_s, d, e, c = _ruiz_equilibrate(p_orig, q_orig, a_full, lower, upper)
    work = _Work(p_diag=p_s, q=q_s, a=a_s, lower=l_s, upper=u_s, d=d, e=e,
                 cost_scale=c, sigma=settings.sigma)
    rho_cur = settings.rho
    work.rho_vec = _rho_vector(rho_cur, l_s, u_s)
    _factorize(work)

    mt = a_s.shape[0]
    x = np.zeros(n)
    z = np.clip(np.zeros(mt), l_s, u_s)
    y = np.zeros(mt)
    a_s_t = sp.csc_matrix(a_s.T)

    def unscale(x, z, y):
        return (d * x, z / e * 1.0, e * y / c)

    def unscaled_duals(y_u):
        lam = y_u[:m]
        y_bnd = y_u[m:]
        return lam, np.maximum(-y_bnd, 0.0), np.maximum(y_bnd, 0.0)

    best = None
    status = ITER_LIMIT
    iterations = settings.max_iterations
    last_polish_check = -10**9

    for it in range(1, settings.max_iterations + 1):
        rhs = np.concatenate([settings.sigma * x - q_s, z - y / work.rho_vec])
        sol = work.solve(rhs)
        x_t = sol[:n]
        nu = sol[n:]
        z_t = z + (nu - y) / work.rho_vec
        x_prev, y_prev = x, y
        x = settings.alpha * x_t + (1 - settings.alpha) * x
        z_mix = settings.alpha * z_t + (1 - settings.alpha) * z
        z = np.clip(z_mix + y / work.rho_vec, l_s, u_s)
        y = y + work.rho_vec * (z_mix - z)

        if it % settings.check_interval and it != settings.max_iterations:
            continue

        x_u, z_u, y_u = unscale(x, z, y)
        lam, mu_lo, mu_up = unscaled_duals(y_u)
        res = _kkt_residuals(problem, x_u, lam, mu_lo, mu_up)

        ax = a_full @ x_u
        scale_pr = max(np.max(np.abs(ax), initial=0.0), np.max(np.abs(z_u), initial=0.0))
        grad_terms = [
            np.max(np.abs(p_orig * x_u), initial=0.0),
            np.max(np.abs(q_orig), initial=0.0),
            np.max(np.abs(a_full.T @ y_u), initial=0.0),
        ]
        scale_du = max(grad_terms)
        eps_pr = settings.abs_tol + settings.rel_tol * scale_pr
        eps_du = settings.abs_tol + settings.rel_tol * scale_du

        prim_res = float(np.max(np.abs(ax - z_u), initial=0.0))
        stat_res = res.stationarity_inf_norm

        # scaled-space residuals drive the step-size adaptation
        ax_s = a_s @ x
        prim_s = float(np.max(np.abs(ax_s - z), initial=0.0))
        prim_s_den = max(np.max(np.abs(ax_s), initial=0.0),
                         np.max(np.abs(z), initial=0.0), 1e-12)
        dual_s = float(np.max(np.abs(p_s * x + q_s + a_s.T @ y), initial=0.0))
        dual_s_den = max(np.max(np.abs(p_s * x), initial=0.0),
                         np.max(np.abs(q_s), initial=0.0),
                         np.max(np.abs(a_s.T @ y), initial=0.0), 1e-12)

        if best is None or res.max() < best[0]:
            best = (res.max(), x_u, lam, mu_lo, mu_up, res)

        if prim_res <= eps_pr and stat_res <= eps_du:
            status = OPTIMAL
            iterations = it
            best = (res.max(), x_u, lam, mu_lo, mu_up, res)
            break

        # try an early polish once the iterate is in the right basin
        if (settings.polish and prim_res <= 1e3 * eps_pr + 1e-4
                and stat_res <= 1e3 * eps_du + 1e-4
                and it - last_polish_check >= 4 * settings.check_interval):
            last_polish_check = it
            pol = _polish(problem, a_full, lower, upper, x_u, y_u)
            if pol is not None:
                xp, lamp, mlp, mup, resp = pol
                if resp.max() <= settings.abs_tol:
                    status = OPTIMAL
                    iterations = it
                    best = (resp.max(), xp, lamp, mlp, mup, resp)
                    break
                if best is None or resp.max() < best[0]:
                    best = (resp.max(), xp, lamp, mlp, mup, resp)

        # infeasibility certificates
        dy = y - y_prev
        dx = x - x_prev
        if _primal_infeasible(a_s_t, dy, l_s, u_s, settings.infeas_tol):
            status = INFEASIBLE
            iterations = it
            break
        if _dual_infeasible(p_s, q_s, a_s, dx, l_s, u_s, settings.infeas_tol):
            status = UNBOUNDED
            iterations = it
            break

        if settings.adaptive_rho and it % (settings.check_interval * 8) == 0:
            ratio = np.sqrt((prim_s / prim_s_den) / max(dual_s / dual_s_den, 1e-16))
            ratio = float(np.clip(ratio, 1e-2, 1e2))
            if ratio > 5.0 or ratio < 0.2:
                rho_cur = float(np.clip(rho_cur * ratio, 1e-4, 1e4))
                work.rho_vec = _rho_vector(rho_cur, l_s, u_s)
                _factorize(work)

    if status in (INFEASIBLE, UNBOUNDED):
        empty = KktResiduals(np.inf, np.inf, np.inf)
        return QpSolution(status, np.full(n, np.nan), np.full(m, np.nan),
                          np.full(n, np.nan), np.full(n, np.nan),
                          np.nan, empty, iterations)

    # final polish attempt if we ran out of iterations or to tighten further
    _, x_u, lam, mu_lo, mu_up, res = best
    if settings.polish and res.max() > settings.abs_tol:
        y_full = np.concatenate([lam, mu_up - mu_lo])
        pol = _polish(problem, a_full, lower, upper, x_u, y_full)
        if pol is not None and pol[4].max() < res.max():
            x_u, lam, mu_lo, mu_up, res = pol
    if status == ITER_LIMIT and res.max() <= settings.abs_tol:
        status = OPTIMAL

    return QpSolution(
        status=status,
        primal=x_u,
        dual_general=lam,
        dual_bounds_lower=mu_lo,
        dual_bounds_upper=mu_up,
        objective_value=problem.objective_value(x_u),
        kkt_residuals=res,
        iterations=iterations,
    )


def _primal_infeasible(a_t, dy, lower, upper, tol):
    norm = np.max(np.abs(dy), initial=0.0)
    if norm < 1e-12:
        return False
    dyn = dy / norm
    if np.max(np.abs(a_t @ dyn), initial=0.0) > tol:
        return False
    pos = np.maximum(dyn, 0.0)
    neg = np.minimum(dyn, 0.0)
    # a positive component on a row with no upper bound cannot certify
    if np.any(pos[~np.isfinite(upper)] > tol) or np.any(-neg[~np.isfinite(lower)] > tol):
        return False
    fin_up = np.isfinite(upper)
    fin_lo = np.isfinite(lower)
    support = float(upper[fin_up] @ pos[fin_up] + lower[fin_lo] @ neg[fin_lo])
    return support <= -tol


def _dual_infeasible(p_diag, q, a, dx, lower, upper, tol):
    norm = np.max(np.abs(dx), initial=0.0)
    if norm < 1e-12:
        return False
    dxn = dx / norm
    if np.max(np.abs(p_diag * dxn), initial=0.0) > tol:
        return False
    if q @ dxn > -tol:
        return False
    adx = a @ dxn
    bad_up = np.isfinite(upper) & (adx > tol)
    bad_lo = np.isfinite(lower) & (adx < -tol)
    return not (np.any(bad_up) or np.any(bad_lo))


def _polish(problem, a_full, lower, upper, x, y_full, reg=1e-9):
    """Solve the equality-constrained QP on the guessed active set.

    Returns ``(x, lam, mu_lo, mu_up, residuals)`` or None when the guess is
    unusable (singular system or worse residuals than the input iterate).
    """
    n = problem.n_vars
    m = problem.n_rows
    slack_lo = a_full @ x - lower
    slack_up = upper - a_full @ x
    lo_active = (y_full < 0) | (np.isfinite(lower) & (slack_lo <= 0))
    up_active = (y_full > 0) | (np.isfinite(upper) & (slack_up <= 0))
    eq = np.isfinite(lower) & np.isfinite(upper) & ((upper - lower) < 1e-12)
    lo_active = (lo_active | eq) & np.isfinite(lower)
    up_active = (up_active | eq) & np.isfinite(upper)
    active = lo_active | up_active
    idx = np.flatnonzero(active)
    if len(idx) == 0 and not np.any(problem.objective_quadratic_diag > 0):
        return None
    a_act = a_full[idx]
    b_act = np.where(lo_active[idx], lower[idx], upper[idx])
    p_diag = 2.0 * problem.objective_quadratic_diag
    k = len(idx)
    kkt = sp.bmat(
        [
            [sp.diags(p_diag + reg), a_act.T],
            [a_act, sp.diags(np.full(k, -reg)) if k else None],
        ],
        format="csc",
    ) if k else sp.diags(p_diag + reg).tocsc()
    rhs = np.concatenate([-problem.objective_linear, b_act])
    try:
        solve = spla.factorized(kkt)
        sol = solve(rhs)
        # one step of iterative refinement to undo the regularization
        kkt_exact = sp.bmat(
            [[sp.diags(p_diag), a_act.T], [a_act, None]], format="csc"
        ) if k else sp.diags(p_diag).tocsc()
        for _ in range(2):
            resid = rhs - kkt_exact @ sol
            sol = sol + solve(resid)
    except Exception:
        return None
    if not np.all(np.isfinite(sol)):
        return None
    xp = sol[:n]
    y_act = sol[n:]
    y_new = np.zeros(len(lower))
    y_new[idx] = y_act
    lam = y_new[:m]
    y_bnd = y_new[m:]
    mu_lo = np.maximum(-y_bnd, 0.0)
    mu_up = np.maximum(y_bnd, 0.0)
    res = _kkt_residuals(problem, xp, lam, mu_lo, mu_up)
    if not np.isfinite(res.max()):
        return None
    return xp, lam, mu_lo, mu_up, res


# ---------------------------------------------------------------------------
# brute-force oracle
# ---------------------------------------------------------------------------

class BruteForceTooLarge(ValueError):
    """Instance exceeds the enumeration limit (n_vars + n_rows <= 20)."""


def brute_force_qp(problem: QpProblem, feas_tol: float = 1e-7) -> QpSolution:
    """Globally solve a small QP by enumerating active sets.

    Every subset of potentially-active one-sided constraints (up to size
    n_vars) is turned into an equality-constrained QP whose KKT system is
    solved directly; the feasible candidate with the lowest objective wins.
    Equality rows and fixed variables are members of every active set.
    Intended as a test oracle for well-scaled instances.
    """
    n = problem.n_vars
    m = problem.n_rows
    if n + m > 20:
        raise BruteForceTooLarge(f"n_vars + n_rows = {n + m} > 20")

    a_dense = problem.a_matrix.toarray() if m else np.zeros((0, n))
    rows = [a_dense, np.eye(n)]
    full_a = np.vstack(rows)
    lower = np.concatenate([problem.row_lower, problem.var_lower])
    upper = np.concatenate([problem.row_upper, problem.var_upper])
    total = len(lower)

    eq_mask = np.isfinite(lower) & np.isfinite(upper) & ((upper - lower) < 1e-12)
    eq_idx = np.flatnonzero(eq_mask)

    # candidate one-sided constraints: (constraint index, side) side=0 lower, 1 upper
    cand = []
    for i in range(total):
        if eq_mask[i]:
            continue
        if np.isfinite(lower[i]):
            cand.append((i, 0))
        if np.isfinite(upper[i]):
            cand.append((i, 1))
    cand_rows = np.array([c[0] for c in cand], dtype=int)
    cand_rhs = np.array(
        [lower[i] if s == 0 else upper[i] for i, s in cand], dtype=float
    )

    p_diag = 2.0 * problem.objective_quadratic_diag
    q = problem.objective_linear
    e = len(eq_idx)
    a_eq = full_a[eq_idx]
    b_eq = np.where(np.isfinite(lower[eq_idx]), lower[eq_idx], upper[eq_idx])

    scale = max(
        1.0,
        np.max(np.abs(q), initial=0.0),
        np.max(np.abs(full_a), initial=0.0),
        np.max(np.abs(lower[np.isfinite(lower)]), initial=0.0),
        np.max(np.abs(upper[np.isfinite(upper)]), initial=0.0),
    )

    best_obj = np.inf
    best = None  # (x, ny_eq, idx_subset, ny_subset)
    max_extra = max(0, n - e)

    for k in range(0, min(max_extra, len(cand)) + 1):
        combos = np.array(list(itertools.combinations(range(len(cand)), k)), dtype=int)
        if combos.size == 0 and k > 0:
            continue
        if k == 0:
            combos = np.zeros((1, 0), dtype=int)
        # drop combos using both sides of one constraint
        if k > 1:
            rows_of = cand_rows[combos]
            keep = np.all(np.diff(np.sort(rows_of, axis=1), axis=1) != 0, axis=1)
            combos = combos[keep]
        if combos.shape[0] == 0:
            continue
        nb = combos.shape[0]
        dim = n + e + k
        m_batch = np.zeros((nb, dim, dim))
        m_batch[:, np.arange(n), np.arange(n)] = p_diag
        if e:
            m_batch[:, n:n + e, :n] = a_eq
            m_batch[:, :n, n:n + e] = a_eq.T
        if k:
            sub_rows = full_a[cand_rows[combos]]  # (nb, k, n)
            m_batch[:, n + e:, :n] = sub_rows
            m_batch[:, :n, n + e:] = np.transpose(sub_rows, (0, 2, 1))
        rhs = np.zeros((nb, dim))
        rhs[:, :n] = -q
        if e:
            rhs[:, n:n + e] = b_eq
        if k:
            rhs[:, n + e:] = cand_rhs[combos]

        for lo_c in range(0, nb, 20000):
            hi_c = min(nb, lo_c + 20000)
            mb = m_batch[lo_c:hi_c]
            rb = rhs[lo_c:hi_c]
            try:
                sols = np.linalg.solve(mb, rb[..., None])[..., 0]
            except np.linalg.LinAlgError:
                sols = np.linalg.pinv(mb) @ rb[..., None]
                sols = sols[..., 0]
            # discard pseudo-solutions of singular systems
            resid = np.max(np.abs(np.einsum("bij,bj->bi", mb, sols) - rb), axis=1)
            ok = resid <= 1e-8 * scale
            if not np.any(ok):
                continue
            xs = sols[:, :n]
            ax = xs @ full_a.T
            feas = ok
            fin_lo = np.isfinite(lower)
            fin_up = np.isfinite(upper)
            if np.any(fin_lo):
                feas &= np.all(ax[:, fin_lo] >= lower[fin_lo] - feas_tol * scale, axis=1)
            if np.any(fin_up):
                feas &= np.all(ax[:, fin_up] <= upper[fin_up] + feas_tol * scale, axis=1)
            if not np.any(feas):
                continue
            objs = xs @ q + (xs * xs) @ problem.objective_quadratic_diag
            objs = np.where(feas, objs, np.inf)
            i_min = int(np.argmin(objs))
            if objs[i_min] < best_obj - 1e-12 * scale:
                best_obj = float(objs[i_min])
                combo = combos[lo_c + i_min]
                best = (xs[i_min], sols[i_min, n:n + e], combo, sols[i_min, n + e:])

    if best is None:
        empty = KktResiduals(np.inf, np.inf, np.inf)
        return QpSolution(INFEASIBLE, np.full(n, np.nan), np.full(m, np.nan),
                          np.full(n, np.nan), np.full(n, np.nan), np.nan, empty)

    x, nu_eq, combo, nu_sub = best
    y_full = np.zeros(total)
    y_full[eq_idx] = nu_eq
    for pos, ci in enumerate(combo):
        row, side = cand[ci]
        y_full[row] += nu_sub[pos]
    lam = y_full[:m]
    y_bnd = y_full[m:]
    mu_lo = np.maximum(-y_bnd, 0.0)
    mu_up = np.maximum(y_bnd, 0.0)
    res = _kkt_residuals(problem, x, lam, mu_lo, mu_up)
    return QpSolution(OPTIMAL, x, lam, mu_lo, mu_up,
                      problem.objective_value(x), res)
