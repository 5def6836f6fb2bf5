"""Fixed-step integrators over one shooting interval with exact sensitivities.

Sensitivities differentiate the discrete integration map itself (internal
numerical differentiation), not the continuous flow, so the defect and the
state/input sensitivities used by the QP generation are mutually consistent.
"""

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import autodiff as ad
from .model import ConfigurationError, eval_dynamics, eval_dynamics_with_jac

SCHEMES = ("erk4", "irk-gl2", "irk-gl3")

_SQRT3 = math.sqrt(3.0)
_SQRT15 = math.sqrt(15.0)

# Gauss-Legendre collocation tableaus, order 2s.
_GL_TABLEAU = {
    2: (
        np.array([[0.25, 0.25 - _SQRT3 / 6.0],
                  [0.25 + _SQRT3 / 6.0, 0.25]]),
        np.array([0.5, 0.5]),
    ),
    3: (
        np.array([[5.0 / 36.0, 2.0 / 9.0 - _SQRT15 / 15.0, 5.0 / 36.0 - _SQRT15 / 30.0],
                  [5.0 / 36.0 + _SQRT15 / 24.0, 2.0 / 9.0, 5.0 / 36.0 - _SQRT15 / 24.0],
                  [5.0 / 36.0 + _SQRT15 / 30.0, 2.0 / 9.0 + _SQRT15 / 15.0, 5.0 / 36.0]]),
        np.array([5.0 / 18.0, 4.0 / 9.0, 5.0 / 18.0]),
    ),
}


@dataclass
class IntegratorConfig:
    """Scheme selection and fixed-step refinement for one shooting interval."""

    scheme: str = "erk4"
    steps: int = 2
    newton_tol: float = 1e-12
    newton_max_iters: int = 20

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigurationError(
                f"unknown integrator scheme {self.scheme!r}, expected one of {SCHEMES}")
        if self.steps < 1:
            raise ConfigurationError("steps per interval must be >= 1")
        if not self.newton_tol > 0.0:
            raise ConfigurationError("newton_tol must be positive")
        if self.newton_max_iters < 1:
            raise ConfigurationError("newton_max_iters must be >= 1")


@dataclass
class StepResult:
    """End state of one integration plus sensitivities of the discrete map."""

    x_next: np.ndarray
    jac_state: np.ndarray = None   # d x_next / d x
    jac_input: np.ndarray = None   # d x_next / d u
    newton_iters: int = 0


class IntegrationError(RuntimeError):
    """Integration failed (overflow or Newton non-convergence)."""

    def __init__(self, message, step_index=None, residual=None):
        super().__init__(message)
        self.step_index = step_index
        self.residual = residual


def _as_scalars(vec):
    return [float(v) for v in vec]


def erk4_step(problem, x, u, p, h, with_sens=True):
    """Classical 4-stage explicit Runge-Kutta step of length h.

    With sensitivities requested, the whole update is evaluated on seeded
    tangents, which differentiates the discrete map exactly; the primal
    values follow the identical arithmetic either way.
    """
    nx, nu = problem.dims.nx, problem.dims.nu
    if with_sens:
        total = nx + nu
        xs = ad.seed(x, 0, total)
        us = ad.seed(u, nx, total)
    else:
        total = 0
        xs = _as_scalars(x)
        us = _as_scalars(u)
    ps = _as_scalars(p)

    def f(state):
        return problem.dynamics(state, us, ps)

    k1 = f(xs)
    k2 = f([xi + 0.5 * h * ki for xi, ki in zip(xs, k1)])
    k3 = f([xi + 0.5 * h * ki for xi, ki in zip(xs, k2)])
    k4 = f([xi + h * ki for xi, ki in zip(xs, k3)])
    out = [xi + (h / 6.0) * (a + 2.0 * b + 2.0 * c + d)
           for xi, a, b, c, d in zip(xs, k1, k2, k3, k4)]

    vals, jac = ad.collect(out, total)
    if not np.all(np.isfinite(vals)):
        raise IntegrationError("state became non-finite during explicit step")
    if with_sens:
        return StepResult(vals, jac[:, :nx].copy(), jac[:, nx:].copy())
    return StepResult(vals)


def irk_gl_step(problem, x, u, p, h, stages=2, with_sens=True,
                newton_tol=1e-12, newton_max_iters=20):
    """Implicit Gauss-Legendre step solved by a full Newton iteration.

    Stage slopes are initialized with f at the interval start.  Each Newton
    sweep evaluates f and its Jacobians at the current stage states; at
    convergence the same Jacobians feed the implicit-function-theorem solve
    for the step sensitivities, reusing the final iteration matrix
    factorization.
    """
    if stages not in _GL_TABLEAU:
        raise ConfigurationError(f"Gauss-Legendre stage count must be 2 or 3, got {stages}")
    a_tab, b_tab = _GL_TABLEAU[stages]
    nx, nu = problem.dims.nx, problem.dims.nu
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    slopes = np.tile(eval_dynamics(problem, x, u, p), (stages, 1))
    n_sys = stages * nx
    return _irk_newton(problem, x, u, p, h, a_tab, b_tab, slopes,
                       np.empty((n_sys, n_sys)), np.empty((stages, nx)),
                       np.empty((stages, nx, nx)), np.empty((stages, nx, nu)),
                       with_sens, newton_tol, newton_max_iters)


def _irk_newton(problem, x, u, p, h, a_tab, b_tab, slopes, newton_mat,
                f_vals, f_jx, f_ju, with_sens, newton_tol=1e-12,
                newton_max_iters=20):
    stages = len(b_tab)
    nx, nu = problem.dims.nx, problem.dims.nu
    n_sys = stages * nx
    iters = 0
    factor = None
    for it in range(newton_max_iters + 1):
        iters = it + 1
        stage_states = x[None, :] + h * (a_tab @ slopes)
        if not np.all(np.isfinite(stage_states)):
            raise IntegrationError("stage state became non-finite in implicit step")
        for i in range(stages):
            vals, jx, ju = eval_dynamics_with_jac(problem, stage_states[i], u, p)
            f_vals[i] = vals
            f_jx[i] = jx
            f_ju[i] = ju
        residual = slopes - f_vals
        res_norm = np.max(np.abs(residual))
        # Newton matrix block (i, j): I*delta_ij - h * a_ij * df/dx(X_i).
        for i in range(stages):
            for j in range(stages):
                blk = (-h * a_tab[i, j]) * f_jx[i]
                if i == j:
                    blk = blk + np.eye(nx)
                newton_mat[i * nx:(i + 1) * nx, j * nx:(j + 1) * nx] = blk
        factor = scipy.linalg.lu_factor(newton_mat)
        if res_norm <= newton_tol:
            break
        if it == newton_max_iters:
            raise IntegrationError(
                f"implicit stage equations did not converge "
                f"(residual {res_norm:.3e} after {newton_max_iters} iterations)",
                residual=res_norm)
        delta = scipy.linalg.lu_solve(factor, -residual.reshape(n_sys))
        slopes = slopes + delta.reshape(stages, nx)

    x_next = x + h * (b_tab @ slopes)
    if not np.all(np.isfinite(x_next)):
        raise IntegrationError("state became non-finite during implicit step")
    if not with_sens:
        return StepResult(x_next, newton_iters=iters)

    # Implicit function theorem at the converged slopes: the same iteration
    # matrix maps stacked stage Jacobians to slope sensitivities.
    rhs_x = f_jx.reshape(n_sys, nx)
    rhs_u = f_ju.reshape(n_sys, nu)
    dk_dx = scipy.linalg.lu_solve(factor, rhs_x).reshape(stages, nx, nx)
    dk_du = scipy.linalg.lu_solve(factor, rhs_u).reshape(stages, nx, nu)
    jac_state = np.eye(nx) + h * np.einsum("s,sij->ij", b_tab, dk_dx)
    jac_input = h * np.einsum("s,sij->ij", b_tab, dk_du)
    return StepResult(x_next, jac_state, jac_input, newton_iters=iters)


def _single_step(problem, config, x, u, p, h, with_sens):
    if config.scheme == "erk4":
        return erk4_step(problem, x, u, p, h, with_sens)
    stages = 2 if config.scheme == "irk-gl2" else 3
    a_tab, b_tab = _GL_TABLEAU[stages]
    nx, nu = problem.dims.nx, problem.dims.nu
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    slopes = np.tile(eval_dynamics(problem, x, u, p), (stages, 1))
    n_sys = stages * nx
    return _irk_newton(problem, x, u, p, h, a_tab, b_tab, slopes,
                       np.empty((n_sys, n_sys)), np.empty((stages, nx)),
                       np.empty((stages, nx, nx)), np.empty((stages, nx, nu)),
                       with_sens, config.newton_tol, config.newton_max_iters)


def simulate_interval(problem, config, x, u, p, with_sens=True):
    """Integrate one shooting interval of length ts with the input held constant.

    Sub-step sensitivities chain by the product rule, so the result is the
    exact derivative of the composed discrete map.
    """
    h = problem.dims.ts / config.steps
    x_cur = np.asarray(x, dtype=float)
    jac_state = np.eye(problem.dims.nx) if with_sens else None
    jac_input = np.zeros((problem.dims.nx, problem.dims.nu)) if with_sens else None
    iters = 0
    for j in range(config.steps):
        try:
            res = _single_step(problem, config, x_cur, u, p, h, with_sens)
        except IntegrationError as err:
            err.step_index = j
            raise
        x_cur = res.x_next
        iters += res.newton_iters
        if with_sens:
            jac_input = res.jac_state @ jac_input + res.jac_input
            jac_state = res.jac_state @ jac_state
    return StepResult(x_cur, jac_state, jac_input, newton_iters=iters)
