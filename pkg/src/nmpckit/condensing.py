"""Full condensing of the stage-sparse QP into a dense QP in input increments.

State increments are eliminated through the linearized dynamics
(dx_{k+1} = A_k dx_k + B_k du_k + d_k with dx_0 pinned at the measured
offset), giving a dense problem over the stacked input increments only.
The expansion step inverts the substitution and recovers the continuity
duals from the stage stationarity conditions.
"""

from dataclasses import dataclass

import numpy as np

from .model import ConfigurationError


@dataclass
class CondensedQp:
    """Dense QP over stacked input increments plus the elimination data.

    ``pred_mat``/``pred_vec`` hold the affine state response
    dx = pred_mat @ du + pred_vec used for expansion; constant objective
    terms are dropped.
    """

    hess: np.ndarray       # (N*nu, N*nu)
    grad: np.ndarray       # (N*nu,)
    con_mat: np.ndarray    # (N*nc + nc_term, N*nu)
    con_lb: np.ndarray
    con_ub: np.ndarray
    pred_mat: np.ndarray   # ((N+1)*nx, N*nu) block lower triangular
    pred_vec: np.ndarray   # ((N+1)*nx,)


def condense(qp, dx0):
    """Eliminate state increments from the stage QP data.

    Classic dense condensing recursion, quadratic in the horizon length;
    adequate for the intended horizon sizes (N up to about a hundred).
    """
    horizon = qp.horizon
    nx = qp.defect.shape[1]
    nu = qp.jac_input.shape[2]
    nc = qp.con_lb.shape[1]
    nc_term = qp.con_lb_term.shape[0]
    n_du = horizon * nu
    dx0 = np.asarray(dx0, dtype=float)
    if dx0.shape != (nx,):
        raise ConfigurationError("initial state offset has the wrong length")

    # Forward rollout of dx = pred_mat @ du + pred_vec.
    pred_mat = np.zeros(((horizon + 1) * nx, n_du))
    pred_vec = np.zeros((horizon + 1) * nx)
    pred_vec[:nx] = dx0
    for k in range(horizon):
        rows = slice((k + 1) * nx, (k + 2) * nx)
        prev = slice(k * nx, (k + 1) * nx)
        pred_mat[rows, :k * nu] = qp.jac_state[k] @ pred_mat[prev, :k * nu]
        pred_mat[rows, k * nu:(k + 1) * nu] = qp.jac_input[k]
        pred_vec[rows] = qp.jac_state[k] @ pred_vec[prev] + qp.defect[k]

    hess = np.zeros((n_du, n_du))
    grad = np.zeros(n_du)
    for k in range(horizon):
        gk = pred_mat[k * nx:(k + 1) * nx]
        ek = pred_vec[k * nx:(k + 1) * nx]
        h = qp.hess[k]
        hxx = h[:nx, :nx]
        hxu = h[:nx, nx:]
        huu = h[nx:, nx:]
        gx = qp.grad[k][:nx]
        gu = qp.grad[k][nx:]
        cols = slice(k * nu, (k + 1) * nu)
        # Quadratic term of (G_k du + e_k, du_k) through the stage Hessian.
        hess += gk.T @ hxx @ gk
        cross = gk.T @ hxu
        hess[:, cols] += cross
        hess[cols, :] += cross.T
        hess[cols, cols] += huu
        grad += gk.T @ (hxx @ ek + gx)
        grad[cols] += hxu.T @ ek + gu
    g_term = pred_mat[horizon * nx:]
    e_term = pred_vec[horizon * nx:]
    hess += g_term.T @ qp.hess_term @ g_term
    grad += g_term.T @ (qp.hess_term @ e_term + qp.grad_term)
    hess = 0.5 * (hess + hess.T)

    con_mat = np.zeros((horizon * nc + nc_term, n_du))
    con_lb = np.zeros(horizon * nc + nc_term)
    con_ub = np.zeros(horizon * nc + nc_term)
    for k in range(horizon):
        rows = slice(k * nc, (k + 1) * nc)
        gk = pred_mat[k * nx:(k + 1) * nx]
        ek = pred_vec[k * nx:(k + 1) * nx]
        con_mat[rows] = qp.con_jac_state[k] @ gk
        con_mat[rows, k * nu:(k + 1) * nu] += qp.con_jac_input[k]
        shift = qp.con_jac_state[k] @ ek
        con_lb[rows] = qp.con_lb[k] - shift
        con_ub[rows] = qp.con_ub[k] - shift
    if nc_term:
        rows = slice(horizon * nc, horizon * nc + nc_term)
        con_mat[rows] = qp.con_jac_term @ g_term
        shift = qp.con_jac_term @ e_term
        con_lb[rows] = qp.con_lb_term - shift
        con_ub[rows] = qp.con_ub_term - shift

    return CondensedQp(hess=hess, grad=grad, con_mat=con_mat, con_lb=con_lb,
                       con_ub=con_ub, pred_mat=pred_mat, pred_vec=pred_vec)


def expand(qp, cond, du, cond_duals=None):
    """Recover stage increments and duals from a condensed solution.

    ``cond_duals`` are the signed condensed-constraint multipliers (upper
    minus lower), one per condensed row; they map one-to-one onto the stage
    constraint duals.  Continuity duals come from the backward stationarity
    recursion of the stage QP.
    """
    horizon = qp.horizon
    nx = qp.defect.shape[1]
    nu = qp.jac_input.shape[2]
    nc = qp.con_lb.shape[1]
    nc_term = qp.con_lb_term.shape[0]
    du = np.asarray(du, dtype=float)
    dx_flat = cond.pred_mat @ du + cond.pred_vec
    dx = dx_flat.reshape(horizon + 1, nx)
    du_stages = du.reshape(horizon, nu)

    if cond_duals is None:
        cond_duals = np.zeros(horizon * nc + nc_term)
    mu = np.asarray(cond_duals[:horizon * nc], dtype=float).reshape(horizon, nc)
    mu_term = np.asarray(cond_duals[horizon * nc:], dtype=float)

    lam = np.zeros((horizon + 1, nx))
    lam[horizon] = (qp.hess_term @ dx[horizon] + qp.grad_term
                    + qp.con_jac_term.T @ mu_term)
    for k in range(horizon - 1, -1, -1):
        h = qp.hess[k]
        lam[k] = (h[:nx, :nx] @ dx[k] + h[:nx, nx:] @ du_stages[k]
                  + qp.grad[k][:nx] + qp.jac_state[k].T @ lam[k + 1]
                  + qp.con_jac_state[k].T @ mu[k])
    return dx, lam, mu, mu_term
