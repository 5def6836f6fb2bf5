"""Multiple-shooting QP generation: per-stage linearization of the OCP.

Produces the stage-sparse QP data (Gauss-Newton Hessian blocks, integration
sensitivities, constraint linearizations, defects) at the current iterate.
The curvature-like measure of nonlinearity (CMoN) logic optionally freezes
per-stage sensitivities whose linearization prediction is still accurate,
re-evaluating everything else every call.
"""

from dataclasses import dataclass

import numpy as np

from .integrator import IntegrationError, simulate_interval
from .model import (ConfigurationError, eval_constraint_and_jac,
                    eval_residual_and_jac)


@dataclass
class Trajectory:
    """Primal-dual iterate: states, inputs, continuity and constraint duals."""

    x: np.ndarray          # (N+1, nx)
    u: np.ndarray          # (N, nu)
    lam: np.ndarray        # (N+1, nx); lam[0] pairs with the initial-value constraint
    mu: np.ndarray         # (N, nc) signed path-constraint duals (upper minus lower)
    mu_term: np.ndarray    # (nc_term,)

    @classmethod
    def zeros(cls, dims):
        return cls(x=np.zeros((dims.horizon + 1, dims.nx)),
                   u=np.zeros((dims.horizon, dims.nu)),
                   lam=np.zeros((dims.horizon + 1, dims.nx)),
                   mu=np.zeros((dims.horizon, dims.nc)),
                   mu_term=np.zeros(dims.nc_term))

    @classmethod
    def from_state(cls, dims, x0):
        traj = cls.zeros(dims)
        traj.x[:] = np.asarray(x0, dtype=float)
        return traj

    def copy(self):
        return Trajectory(self.x.copy(), self.u.copy(), self.lam.copy(),
                          self.mu.copy(), self.mu_term.copy())

    def check_shapes(self, dims):
        expect = {
            "x": (dims.horizon + 1, dims.nx),
            "u": (dims.horizon, dims.nu),
            "lam": (dims.horizon + 1, dims.nx),
            "mu": (dims.horizon, dims.nc),
            "mu_term": (dims.nc_term,),
        }
        for attr, shape in expect.items():
            arr = getattr(self, attr)
            if arr.shape != shape:
                raise ConfigurationError(
                    f"trajectory field {attr} has shape {arr.shape}, expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise ConfigurationError(f"trajectory field {attr} is not finite")


@dataclass
class StageQpData:
    """Linearized stage data for the structured QP at one iterate."""

    hess: np.ndarray           # (N, nz, nz) Gauss-Newton blocks
    grad: np.ndarray           # (N, nz)
    jac_state: np.ndarray      # (N, nx, nx) sensitivities of the interval map
    jac_input: np.ndarray      # (N, nx, nu)
    defect: np.ndarray         # (N, nx) integrated end state minus next node
    phi: np.ndarray            # (N, nx) integrated end state itself
    con_jac_state: np.ndarray  # (N, nc, nx)
    con_jac_input: np.ndarray  # (N, nc, nu)
    con_lb: np.ndarray         # (N, nc) residual bounds at the iterate
    con_ub: np.ndarray
    hess_term: np.ndarray      # (nx, nx)
    grad_term: np.ndarray      # (nx,)
    con_jac_term: np.ndarray   # (nc_term, nx)
    con_lb_term: np.ndarray
    con_ub_term: np.ndarray
    dx0: np.ndarray            # measured state minus first node

    @property
    def horizon(self):
        return self.hess.shape[0]

    def copy(self):
        return StageQpData(**{k: getattr(self, k).copy()
                              for k in self.__dataclass_fields__})


@dataclass
class CmonConfig:
    """Adaptive sensitivity-update settings.

    ``eta_pri``/``eta_dual`` are the freeze thresholds.  When left at None,
    they derive from the QP solution tolerances via the documented plumbing
    heuristic eta = eps_rel (the dual test stays off unless requested).
    """

    enabled: bool = False
    eta_pri: float = None
    eta_dual: float = None
    eps_abs: float = 1e-1
    eps_rel: float = 1e-1
    eps_den: float = 1e-12

    def primal_threshold(self):
        return self.eps_rel if self.eta_pri is None else self.eta_pri

    def dual_threshold(self):
        return np.inf if self.eta_dual is None else self.eta_dual


@dataclass
class CmonFlags:
    """Per-stage update decisions and the nonlinearity measures behind them.

    ``kappa`` entries are NaN when the measure is undefined (no previous
    data or vanishing denominator); such stages are always re-evaluated.
    """

    update_mask: np.ndarray
    kappa: np.ndarray
    kappa_tilde: np.ndarray

    @classmethod
    def all_updated(cls, horizon):
        return cls(update_mask=np.ones(horizon, dtype=bool),
                   kappa=np.full(horizon, np.nan),
                   kappa_tilde=np.full(horizon, np.nan))

    @property
    def update_fraction(self):
        return float(np.mean(self.update_mask))


class GenerationError(RuntimeError):
    """Integration failed while linearizing a stage."""

    def __init__(self, stage, cause):
        super().__init__(f"stage {stage}: {cause}")
        self.stage = stage
        self.cause = cause


def cmon_measures(prev_traj, cur_traj, prev_qp, cur_phi, cur_sens=None,
                  eps_den=1e-12):
    """Primal and dual nonlinearity measures between two iterates.

    The primal measure compares the fresh integration result against the
    stored linearization prediction along the iterate increment; the dual
    measure weighs the sensitivity change by the continuity-dual increment
    and therefore needs the fresh sensitivities (``cur_sens``).  Stages with
    a vanishing denominator get NaN, meaning "must update".
    """
    horizon = prev_qp.horizon
    kappa = np.full(horizon, np.nan)
    kappa_tilde = np.full(horizon, np.nan)
    for k in range(horizon):
        qx = cur_traj.x[k] - prev_traj.x[k]
        qu = cur_traj.u[k] - prev_traj.u[k]
        pred = prev_qp.jac_state[k] @ qx + prev_qp.jac_input[k] @ qu
        den = np.linalg.norm(pred)
        if den >= eps_den:
            num = np.linalg.norm(cur_phi[k] - prev_qp.phi[k] - pred)
            kappa[k] = num / den
        if cur_sens is not None:
            dlam = cur_traj.lam[k + 1] - prev_traj.lam[k + 1]
            cur_a, cur_b = cur_sens[k]
            old = np.hstack((prev_qp.jac_state[k], prev_qp.jac_input[k]))
            new = np.hstack((cur_a, cur_b))
            den_d = np.linalg.norm(dlam @ old)
            if den_d >= eps_den:
                kappa_tilde[k] = np.linalg.norm(dlam @ (new - old)) / den_d
    return kappa, kappa_tilde


def _stage_cost_terms(problem, x, u, p, k):
    h_val, h_jac = eval_residual_and_jac(problem, x, u, p)
    w = problem.weight_at(k)
    wj = w @ h_jac
    return h_jac.T @ wj, h_jac.T @ (w @ h_val)


def generate_qp(problem, integ_cfg, traj, x0_hat, params, prev=None,
                cmon=None):
    """Linearize the OCP at ``traj``, producing QP data and update flags.

    ``prev`` is the (StageQpData, Trajectory) pair of the previous
    linearization; it is required when the CMoN logic is enabled and feeds
    the freeze decisions.  Defects, cost terms, and constraint rows are
    always re-evaluated; only the integration sensitivities may be frozen.
    """
    dims = problem.dims
    traj.check_shapes(dims)
    x0_hat = np.asarray(x0_hat, dtype=float)
    if x0_hat.shape != (dims.nx,):
        raise ConfigurationError("measured state has the wrong length")
    params = np.asarray(params, dtype=float)
    horizon = dims.horizon
    use_cmon = cmon is not None and cmon.enabled
    if use_cmon and prev is None:
        raise ConfigurationError("CMoN generation needs the previous QP data")

    data = StageQpData(
        hess=np.zeros((horizon, dims.nz, dims.nz)),
        grad=np.zeros((horizon, dims.nz)),
        jac_state=np.zeros((horizon, dims.nx, dims.nx)),
        jac_input=np.zeros((horizon, dims.nx, dims.nu)),
        defect=np.zeros((horizon, dims.nx)),
        phi=np.zeros((horizon, dims.nx)),
        con_jac_state=np.zeros((horizon, dims.nc, dims.nx)),
        con_jac_input=np.zeros((horizon, dims.nc, dims.nu)),
        con_lb=np.zeros((horizon, dims.nc)),
        con_ub=np.zeros((horizon, dims.nc)),
        hess_term=np.zeros((dims.nx, dims.nx)),
        grad_term=np.zeros(dims.nx),
        con_jac_term=np.zeros((dims.nc_term, dims.nx)),
        con_lb_term=np.zeros(dims.nc_term),
        con_ub_term=np.zeros(dims.nc_term),
        dx0=x0_hat - traj.x[0],
    )

    if not use_cmon:
        flags = CmonFlags.all_updated(horizon)
        for k in range(horizon):
            try:
                res = simulate_interval(problem, integ_cfg, traj.x[k],
                                        traj.u[k], params, with_sens=True)
            except IntegrationError as err:
                raise GenerationError(stage=k, cause=err) from err
            data.phi[k] = res.x_next
            data.defect[k] = res.x_next - traj.x[k + 1]
            data.jac_state[k] = res.jac_state
            data.jac_input[k] = res.jac_input
    else:
        flags = _generate_with_cmon(problem, integ_cfg, traj, params, prev,
                                    cmon, data)

    for k in range(horizon):
        data.hess[k], data.grad[k] = _stage_cost_terms(
            problem, traj.x[k], traj.u[k], params, k)
        if dims.nc:
            r_val, r_jx, r_ju = eval_constraint_and_jac(
                problem, traj.x[k], traj.u[k], params)
            data.con_jac_state[k] = r_jx
            data.con_jac_input[k] = r_ju
            data.con_lb[k] = problem.con_lb - r_val
            data.con_ub[k] = problem.con_ub - r_val

    h_val, h_jac = eval_residual_and_jac(problem, traj.x[horizon], None,
                                         params, terminal=True)
    wn = problem.weight_term
    data.hess_term = h_jac.T @ (wn @ h_jac)
    data.grad_term = h_jac.T @ (wn @ h_val)
    if dims.nc_term:
        r_val, r_jx = eval_constraint_and_jac(problem, traj.x[horizon], None,
                                              params, terminal=True)
        data.con_jac_term = r_jx
        data.con_lb_term = problem.con_lb_term - r_val
        data.con_ub_term = problem.con_ub_term - r_val
    return data, flags


def _generate_with_cmon(problem, integ_cfg, traj, params, prev, cmon, data):
    """Value-only integration everywhere, fresh sensitivities where needed."""
    prev_qp, prev_traj = prev
    horizon = data.horizon
    for k in range(horizon):
        try:
            res = simulate_interval(problem, integ_cfg, traj.x[k], traj.u[k],
                                    params, with_sens=False)
        except IntegrationError as err:
            raise GenerationError(stage=k, cause=err) from err
        data.phi[k] = res.x_next
        data.defect[k] = res.x_next - traj.x[k + 1]

    kappa, _ = cmon_measures(prev_traj, traj, prev_qp, data.phi,
                             eps_den=cmon.eps_den)
    eta_pri = cmon.primal_threshold()
    eta_dual = cmon.dual_threshold()
    kappa_tilde = np.full(horizon, np.nan)
    mask = np.ones(horizon, dtype=bool)
    for k in range(horizon):
        freeze = np.isfinite(kappa[k]) and kappa[k] <= eta_pri
        fresh = None
        if freeze and np.isfinite(eta_dual):
            # Dual test: requires the fresh sensitivity for its numerator,
            # costing one extra sensitivity integration for this stage.
            try:
                fresh = simulate_interval(problem, integ_cfg, traj.x[k],
                                          traj.u[k], params, with_sens=True)
            except IntegrationError as err:
                raise GenerationError(stage=k, cause=err) from err
            dlam = traj.lam[k + 1] - prev_traj.lam[k + 1]
            old = np.hstack((prev_qp.jac_state[k], prev_qp.jac_input[k]))
            new = np.hstack((fresh.jac_state, fresh.jac_input))
            den_d = np.linalg.norm(dlam @ old)
            if den_d < cmon.eps_den:
                freeze = False
            else:
                kappa_tilde[k] = np.linalg.norm(dlam @ (new - old)) / den_d
                freeze = kappa_tilde[k] <= eta_dual
        if freeze:
            data.jac_state[k] = prev_qp.jac_state[k]
            data.jac_input[k] = prev_qp.jac_input[k]
            mask[k] = False
        else:
            if fresh is None:
                try:
                    fresh = simulate_interval(problem, integ_cfg, traj.x[k],
                                              traj.u[k], params, with_sens=True)
                except IntegrationError as err:
                    raise GenerationError(stage=k, cause=err) from err
            data.jac_state[k] = fresh.jac_state
            data.jac_input[k] = fresh.jac_input
    return CmonFlags(update_mask=mask, kappa=kappa, kappa_tilde=kappa_tilde)
