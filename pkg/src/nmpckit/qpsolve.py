"""Embedded convex QP solvers for the two-sided-inequality subproblems.

One primal-dual interior-point method (Mehrotra predictor-corrector) with
two linear-algebra backends: a dense factorization for the condensed QP and
a backward Riccati recursion over the stage structure for the sparse QP.
Two-sided rows are handled natively with paired slacks; both paths share
the outer iteration logic.
"""

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .model import ConfigurationError

_BOUNDARY_FRACTION = 0.995
_HUGE_STEP = 1e16


@dataclass
class QpSolverConfig:
    """Termination tolerances and safeguards shared by both backends."""

    tol: float = 1e-8
    max_iters: int = 100
    reg_eps: float = 1e-9
    path: str = "dense"

    def __post_init__(self):
        if not self.tol > 0.0:
            raise ConfigurationError("QP tolerance must be positive")
        if self.max_iters < 1:
            raise ConfigurationError("QP max_iters must be >= 1")
        if self.path not in ("dense", "sparse"):
            raise ConfigurationError("QP path must be 'dense' or 'sparse'")


@dataclass
class QpSolution:
    """Primal-dual result of one QP solve.

    ``ineq_duals`` holds one (lower, upper) multiplier pair per constraint
    row; at an optimum at most one of the pair is active.  ``eq_duals`` are
    the continuity/initial-condition multipliers, present on the sparse path
    and reconstructed by expansion on the dense path.
    """

    primal: np.ndarray
    ineq_duals: np.ndarray
    eq_duals: np.ndarray = None
    status: str = "optimal"
    iters: int = 0
    kkt_residual: float = np.inf

    @property
    def signed_ineq_duals(self):
        """Upper-minus-lower multiplier per row."""
        return self.ineq_duals[:, 1] - self.ineq_duals[:, 0]


def kkt_check_dense(hess, grad, con_mat, lb, ub, primal, ineq_duals):
    """Independent KKT residuals (stationarity, feasibility, complementarity).

    Works directly from the problem data and a candidate primal-dual point;
    shares no state with the solvers.
    """
    z = ineq_duals[:, 0]
    w = ineq_duals[:, 1]
    stat = hess @ primal + grad
    if con_mat.shape[0]:
        stat = stat + con_mat.T @ (w - z)
    stat_res = np.max(np.abs(stat)) if stat.size else 0.0
    feas = 0.0
    compl = 0.0
    if con_mat.shape[0]:
        cx = con_mat @ primal
        lo = np.where(np.isfinite(lb), lb - cx, -np.inf)
        hi = np.where(np.isfinite(ub), cx - ub, -np.inf)
        feas = float(max(np.max(lo, initial=0.0), np.max(hi, initial=0.0)))
        low_gap = np.where(np.isfinite(lb), np.abs(z * (cx - lb)), 0.0)
        up_gap = np.where(np.isfinite(ub), np.abs(w * (ub - cx)), 0.0)
        compl = float(max(np.max(low_gap, initial=0.0),
                          np.max(up_gap, initial=0.0)))
        compl = max(compl, float(np.max(-z, initial=0.0)),
                    float(np.max(-w, initial=0.0)))
    return stat_res, feas, compl


def _regularize(hess, reg_eps):
    hess = 0.5 * (hess + hess.T)
    if hess.shape[0] == 0:
        return hess
    if np.linalg.eigvalsh(hess)[0] < reg_eps:
        hess = hess + reg_eps * np.eye(hess.shape[0])
    return hess


def _max_step(v, dv):
    shrink = dv < 0.0
    if not np.any(shrink):
        return _HUGE_STEP
    return float(np.min(-v[shrink] / dv[shrink]))


class _TwoSidedRows:
    """Bookkeeping for finite lower/upper sides of two-sided rows."""

    def __init__(self, lb, ub):
        if np.any(lb > ub):
            raise ConfigurationError("constraint bounds are not ordered")
        self.lb = lb
        self.ub = ub
        self.has_lb = np.isfinite(lb)
        self.has_ub = np.isfinite(ub)
        self.n_pairs = int(np.sum(self.has_lb) + np.sum(self.has_ub))


def solve_dense(hess, grad, con_mat, lb, ub, config):
    """Solve min 1/2 x'Hx + g'x subject to lb <= Cx <= ub.

    H must be symmetric positive semidefinite; a +reg_eps*I floor is applied
    when its smallest eigenvalue falls below reg_eps.  Rows may have either
    bound infinite.
    """
    hess = _regularize(np.asarray(hess, dtype=float), config.reg_eps)
    grad = np.asarray(grad, dtype=float)
    con_mat = np.asarray(con_mat, dtype=float)
    if con_mat.ndim != 2 or con_mat.shape[1] != grad.shape[0]:
        raise ConfigurationError("constraint matrix shape mismatch")
    lb = np.asarray(lb, dtype=float)
    ub = np.asarray(ub, dtype=float)
    rows = _TwoSidedRows(lb, ub)
    n = grad.shape[0]
    m = con_mat.shape[0]

    try:
        hess_chol = scipy.linalg.cho_factor(hess)
    except scipy.linalg.LinAlgError:
        return QpSolution(primal=np.zeros(n), ineq_duals=np.zeros((m, 2)),
                          status="numerical_failure")

    def refine(mat, factor, rhs):
        sol = scipy.linalg.cho_solve(factor, rhs)
        return sol + scipy.linalg.cho_solve(factor, rhs - mat @ sol)

    # Interior unconstrained optimum: zero multipliers already certify it.
    x_free = refine(hess, hess_chol, -grad)
    if m == 0:
        sol = QpSolution(primal=x_free, ineq_duals=np.zeros((0, 2)), iters=1)
        sol.kkt_residual = max(kkt_check_dense(hess, grad, con_mat, lb, ub,
                                               x_free, sol.ineq_duals))
        return sol
    cx = con_mat @ x_free
    if (np.max(np.where(rows.has_lb, lb - cx, -np.inf), initial=-np.inf) <= 0.0
            and np.max(np.where(rows.has_ub, cx - ub, -np.inf), initial=-np.inf) <= 0.0):
        sol = QpSolution(primal=x_free, ineq_duals=np.zeros((m, 2)), iters=1)
        sol.kkt_residual = max(kkt_check_dense(hess, grad, con_mat, lb, ub,
                                               x_free, sol.ineq_duals))
        return sol

    state = _IpmState(rows, con_mat @ x_free)
    x = x_free

    def kkt_solve(d_row, rhs):
        mat = hess + con_mat.T @ (d_row[:, None] * con_mat)
        factor = scipy.linalg.cho_factor(mat)
        return lambda r: refine(mat, factor, r)

    return _ipm_loop(config, state, x, con_mat,
                     lambda xv: hess @ xv + grad,
                     lambda xv: con_mat @ xv,
                     kkt_solve,
                     lambda xv, ineq: QpSolution(
                         primal=xv, ineq_duals=ineq,
                         kkt_residual=max(kkt_check_dense(
                             hess, grad, con_mat, lb, ub, xv, ineq))))


class _IpmState:
    """Slack and multiplier iterate for the paired two-sided barrier."""

    def __init__(self, rows, cx0):
        self.rows = rows
        t_raw = np.where(rows.has_lb, cx0 - rows.lb, 1.0)
        s_raw = np.where(rows.has_ub, rows.ub - cx0, 1.0)
        self.t = np.where(rows.has_lb, np.maximum(t_raw, 1.0), 1.0)
        self.s = np.where(rows.has_ub, np.maximum(s_raw, 1.0), 1.0)
        self.z = np.where(rows.has_lb, 1.0, 0.0)
        self.w = np.where(rows.has_ub, 1.0, 0.0)

    def mu(self):
        if self.rows.n_pairs == 0:
            return 0.0
        total = (np.sum(self.t[self.rows.has_lb] * self.z[self.rows.has_lb])
                 + np.sum(self.s[self.rows.has_ub] * self.w[self.rows.has_ub]))
        return total / self.rows.n_pairs

    def slack_residuals(self, cx):
        rows = self.rows
        r_low = np.where(rows.has_lb, cx - rows.lb - self.t, 0.0)
        r_up = np.where(rows.has_ub, cx + self.s - rows.ub, 0.0)
        return r_low, r_up

    def compl_inf(self):
        rows = self.rows
        prods = np.concatenate((self.t[rows.has_lb] * self.z[rows.has_lb],
                                self.s[rows.has_ub] * self.w[rows.has_ub]))
        return float(np.max(prods, initial=0.0))

    def duals(self):
        return np.column_stack((self.z, self.w))


def _ipm_loop(config, state, x, con_mat, stat_fun, cx_fun, kkt_solver_fun,
              finish):
    """Mehrotra predictor-corrector iterations shared by both backends.

    ``stat_fun`` returns the stationarity residual without the inequality
    term, ``kkt_solver_fun`` returns a linear-map closure for the current
    row scaling, and ``finish`` packages the solution.
    """
    rows = state.rows
    best = None
    for it in range(config.max_iters):
        cx = cx_fun(x)
        stat = stat_fun(x) + con_mat.T @ (state.w - state.z)
        r_low, r_up = state.slack_residuals(cx)
        stat_res = float(np.max(np.abs(stat), initial=0.0))
        feas_res = float(max(np.max(np.abs(r_low), initial=0.0),
                             np.max(np.abs(r_up), initial=0.0)))
        compl_res = state.compl_inf()
        worst = max(stat_res, feas_res, compl_res)
        if best is None or worst < best[0]:
            best = (worst, x.copy(), state.duals())
        if stat_res <= config.tol and feas_res <= config.tol and compl_res <= config.tol:
            sol = finish(x, state.duals())
            sol.status = "optimal"
            sol.iters = it
            return sol

        d_row = (np.where(rows.has_lb, state.z / state.t, 0.0)
                 + np.where(rows.has_ub, state.w / state.s, 0.0))
        try:
            solve = kkt_solver_fun(d_row, None)
        except (scipy.linalg.LinAlgError, ValueError):
            sol = finish(best[1], best[2])
            sol.status = "numerical_failure"
            sol.iters = it
            return sol

        def directions(rc_low, rc_up):
            combo = (np.where(rows.has_ub,
                              (rc_up + state.w * r_up) / state.s, 0.0)
                     - np.where(rows.has_lb,
                                (rc_low - state.z * r_low) / state.t, 0.0))
            rhs = -stat - con_mat.T @ combo
            dx = solve(rhs)
            v = con_mat @ dx
            dt = np.where(rows.has_lb, v + r_low, 0.0)
            dz = np.where(rows.has_lb, (rc_low - state.z * dt) / state.t, 0.0)
            ds = np.where(rows.has_ub, -v - r_up, 0.0)
            dw = np.where(rows.has_ub, (rc_up - state.w * ds) / state.s, 0.0)
            return dx, dt, dz, ds, dw

        mu = state.mu()
        rc_low_aff = np.where(rows.has_lb, -state.t * state.z, 0.0)
        rc_up_aff = np.where(rows.has_ub, -state.s * state.w, 0.0)
        dx_a, dt_a, dz_a, ds_a, dw_a = directions(rc_low_aff, rc_up_aff)

        lb_m, ub_m = rows.has_lb, rows.has_ub
        alpha_p_aff = min(_max_step(state.t[lb_m], dt_a[lb_m]),
                          _max_step(state.s[ub_m], ds_a[ub_m]), 1.0)
        alpha_d_aff = min(_max_step(state.z[lb_m], dz_a[lb_m]),
                          _max_step(state.w[ub_m], dw_a[ub_m]), 1.0)
        mu_aff = ((np.sum((state.t + alpha_p_aff * dt_a)[lb_m]
                          * (state.z + alpha_d_aff * dz_a)[lb_m])
                   + np.sum((state.s + alpha_p_aff * ds_a)[ub_m]
                            * (state.w + alpha_d_aff * dw_a)[ub_m]))
                  / rows.n_pairs)
        sigma = min(max((mu_aff / mu) ** 3, 0.0), 0.99) if mu > 0 else 0.0

        rc_low = np.where(lb_m, sigma * mu - state.t * state.z - dt_a * dz_a, 0.0)
        rc_up = np.where(ub_m, sigma * mu - state.s * state.w - ds_a * dw_a, 0.0)
        dx, dt, dz, ds, dw = directions(rc_low, rc_up)

        alpha_p = _BOUNDARY_FRACTION * min(_max_step(state.t[lb_m], dt[lb_m]),
                                           _max_step(state.s[ub_m], ds[ub_m]))
        alpha_d = _BOUNDARY_FRACTION * min(_max_step(state.z[lb_m], dz[lb_m]),
                                           _max_step(state.w[ub_m], dw[ub_m]))
        alpha_p = min(alpha_p, 1.0)
        alpha_d = min(alpha_d, 1.0)

        # Keep the barrier parameter monotone; rarely triggers more than once.
        for _ in range(30):
            t_new = state.t + alpha_p * dt
            s_new = state.s + alpha_p * ds
            z_new = state.z + alpha_d * dz
            w_new = state.w + alpha_d * dw
            mu_new = ((np.sum(t_new[lb_m] * z_new[lb_m])
                       + np.sum(s_new[ub_m] * w_new[ub_m])) / rows.n_pairs)
            if mu_new <= mu * (1.0 + 1e-12) or max(alpha_p, alpha_d) < 1e-10:
                break
            alpha_p *= 0.5
            alpha_d *= 0.5

        x = x + alpha_p * dx
        state.t = t_new
        state.s = s_new
        state.z = z_new
        state.w = w_new
        state.extra_update(alpha_d)
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(state.z))
                and np.all(np.isfinite(state.w))):
            sol = finish(best[1], best[2])
            sol.status = "numerical_failure"
            sol.iters = it + 1
            return sol

    sol = finish(best[1], best[2])
    sol.status = "max_iters"
    sol.iters = config.max_iters
    return sol


def _noop_extra(alpha_d):
    return None


_IpmState.extra_update = staticmethod(_noop_extra)
