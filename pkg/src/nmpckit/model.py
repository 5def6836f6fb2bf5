"""Continuous-time optimal control problem definition and exact model derivatives.

Model functions are written against a generic scalar-arithmetic interface
(plain floats or :class:`~nmpckit.autodiff.Tangent`), so the same source
serves both plain evaluation and Jacobian evaluation.
"""

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad


class ConfigurationError(ValueError):
    """Problem or option data is inconsistent (dimension or bound mismatch)."""


@dataclass(frozen=True)
class Dims:
    """Problem dimensions and horizon layout.

    Attributes
    ----------
    nx, nu : int
        State and input counts.
    nr, nr_term : int
        Stage and terminal residual lengths.
    nc, nc_term : int
        Stage and terminal path-constraint counts.
    horizon : int
        Number of shooting intervals.
    ts : float
        Shooting interval length.
    n_par : int
        Online parameter count (references, tunable model data).
    """

    nx: int
    nu: int
    nr: int
    nr_term: int
    nc: int
    nc_term: int
    horizon: int
    ts: float
    n_par: int = 0

    def __post_init__(self):
        counts = (self.nx, self.nu, self.nr, self.nr_term, self.nc,
                  self.nc_term, self.n_par)
        if any(c < 0 for c in counts):
            raise ConfigurationError("dimension counts must be nonnegative")
        if self.nx < 1:
            raise ConfigurationError("state dimension must be positive")
        if self.horizon < 1:
            raise ConfigurationError("horizon must have at least one interval")
        if not self.ts > 0.0:
            raise ConfigurationError("interval length must be positive")

    @property
    def nz(self):
        """Stage variable size nx + nu."""
        return self.nx + self.nu


@dataclass(frozen=True)
class OcpProblem:
    """Continuous-time OCP: dynamics, least-squares residuals, path constraints.

    The callables receive sequences of scalars (floats or tangents) and must
    return a list of scalars of the declared length:

    - ``dynamics(x, u, p)`` -> state derivative, length nx
    - ``stage_residual(x, u, p)`` -> length nr
    - ``terminal_residual(x, p)`` -> length nr_term
    - ``stage_constraint(x, u, p)`` -> length nc (may be None when nc == 0)
    - ``terminal_constraint(x, p)`` -> length nc_term (None when 0)

    ``weight``/``weight_term`` are the symmetric PSD least-squares weights;
    ``stage_weights`` optionally overrides ``weight`` per interval.
    Instances are immutable after construction and safe to share across
    threads.
    """

    dims: Dims
    dynamics: callable
    stage_residual: callable
    terminal_residual: callable
    weight: np.ndarray
    weight_term: np.ndarray
    stage_constraint: callable = None
    terminal_constraint: callable = None
    con_lb: np.ndarray = None
    con_ub: np.ndarray = None
    con_lb_term: np.ndarray = None
    con_ub_term: np.ndarray = None
    stage_weights: np.ndarray = None
    name: str = ""
    meta: dict = field(default_factory=dict)

    def weight_at(self, k):
        """Residual weight for interval k (supports time-varying weights)."""
        if self.stage_weights is not None:
            return self.stage_weights[k]
        return self.weight


def _check_psd(mat, label):
    mat = np.asarray(mat, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ConfigurationError(f"{label} must be square, got shape {mat.shape}")
    if not np.allclose(mat, mat.T, atol=1e-12):
        raise ConfigurationError(f"{label} must be symmetric")
    if mat.shape[0] and np.linalg.eigvalsh(mat)[0] < -1e-10:
        raise ConfigurationError(f"{label} must be positive semidefinite")
    return mat


def make_problem(dims, dynamics, stage_residual, terminal_residual, weight,
                 weight_term, stage_constraint=None, terminal_constraint=None,
                 con_lb=None, con_ub=None, con_lb_term=None, con_ub_term=None,
                 stage_weights=None, name="", meta=None, probe_state=None):
    """Validate and assemble an :class:`OcpProblem`.

    Checks weight shapes and definiteness, bound ordering, and that every
    model function returns the declared output length at a probe point
    (``probe_state`` for models undefined at the origin).
    """
    weight = _check_psd(weight, "stage weight")
    weight_term = _check_psd(weight_term, "terminal weight")
    if weight.shape[0] != dims.nr:
        raise ConfigurationError("stage weight size does not match residual length")
    if weight_term.shape[0] != dims.nr_term:
        raise ConfigurationError("terminal weight size does not match residual length")
    if stage_weights is not None:
        stage_weights = np.asarray(stage_weights, dtype=float)
        if stage_weights.shape != (dims.horizon, dims.nr, dims.nr):
            raise ConfigurationError("per-stage weights must have shape (N, nr, nr)")
        for k in range(dims.horizon):
            _check_psd(stage_weights[k], f"stage weight {k}")

    def _bounds(lb, ub, n, label):
        if n == 0:
            return np.zeros(0), np.zeros(0)
        if lb is None or ub is None:
            raise ConfigurationError(f"{label} bounds are required when the "
                                     "constraint count is positive")
        lb = np.asarray(lb, dtype=float)
        ub = np.asarray(ub, dtype=float)
        if lb.shape != (n,) or ub.shape != (n,):
            raise ConfigurationError(f"{label} bounds must have length {n}")
        if np.any(lb > ub):
            raise ConfigurationError(f"{label} bounds are not ordered")
        return lb, ub

    con_lb, con_ub = _bounds(con_lb, con_ub, dims.nc, "stage constraint")
    con_lb_term, con_ub_term = _bounds(con_lb_term, con_ub_term, dims.nc_term,
                                       "terminal constraint")
    if dims.nc > 0 and stage_constraint is None:
        raise ConfigurationError("stage constraint function missing")
    if dims.nc_term > 0 and terminal_constraint is None:
        raise ConfigurationError("terminal constraint function missing")

    problem = OcpProblem(
        dims=dims, dynamics=dynamics, stage_residual=stage_residual,
        terminal_residual=terminal_residual, weight=weight,
        weight_term=weight_term, stage_constraint=stage_constraint,
        terminal_constraint=terminal_constraint, con_lb=con_lb, con_ub=con_ub,
        con_lb_term=con_lb_term, con_ub_term=con_ub_term,
        stage_weights=stage_weights, name=name, meta=dict(meta or {}))

    # Probe each function once so length mismatches surface at load time.
    x0 = np.zeros(dims.nx) if probe_state is None else np.asarray(probe_state, float)
    u0 = np.zeros(dims.nu)
    p0 = np.zeros(dims.n_par)
    eval_dynamics(problem, x0, u0, p0)
    eval_residual_and_jac(problem, x0, u0, p0)
    eval_residual_and_jac(problem, x0, u0, p0, terminal=True)
    eval_constraint_and_jac(problem, x0, u0, p0)
    eval_constraint_and_jac(problem, x0, u0, p0, terminal=True)
    return problem


def _plain(vec):
    return [float(v) for v in vec]


def _check_args(problem, x, u):
    if len(x) != problem.dims.nx:
        raise ConfigurationError(
            f"state has length {len(x)}, expected {problem.dims.nx}")
    if u is not None and len(u) != problem.dims.nu:
        raise ConfigurationError(
            f"input has length {len(u)}, expected {problem.dims.nu}")


def _check_out(out, n, label):
    if len(out) != n:
        raise ConfigurationError(
            f"{label} returned length {len(out)}, expected {n}")
    return out


def eval_dynamics(problem, x, u, p):
    """Right-hand side f(x, u, p) of the explicit ODE."""
    _check_args(problem, x, u)
    out = problem.dynamics(_plain(x), _plain(u), _plain(p))
    _check_out(out, problem.dims.nx, "dynamics")
    return np.array([ad.value(v) for v in out])


def jac_dynamics(problem, x, u, p):
    """Exact Jacobians (df/dx, df/du) by forward-mode differentiation."""
    _check_args(problem, x, u)
    vals, (jx, ju) = ad.value_and_jacobian(problem.dynamics, (x, u), (p,))
    _check_out(vals, problem.dims.nx, "dynamics")
    return jx, ju


def eval_dynamics_with_jac(problem, x, u, p):
    """Value and Jacobians of f in one differentiation pass."""
    _check_args(problem, x, u)
    vals, (jx, ju) = ad.value_and_jacobian(problem.dynamics, (x, u), (p,))
    _check_out(vals, problem.dims.nx, "dynamics")
    return vals, jx, ju


def eval_residual_and_jac(problem, x, u, p, terminal=False):
    """Residual h and its Jacobian w.r.t. (x, u), or w.r.t. x when terminal."""
    dims = problem.dims
    if terminal:
        _check_args(problem, x, None)
        vals, (jx,) = ad.value_and_jacobian(problem.terminal_residual, (x,), (p,))
        _check_out(vals, dims.nr_term, "terminal residual")
        return vals, jx
    _check_args(problem, x, u)
    vals, (jx, ju) = ad.value_and_jacobian(problem.stage_residual, (x, u), (p,))
    _check_out(vals, dims.nr, "stage residual")
    return vals, np.hstack((jx, ju))


def eval_constraint_and_jac(problem, x, u, p, terminal=False):
    """Path-constraint value r and Jacobians (w.r.t. x, and u for stages)."""
    dims = problem.dims
    if terminal:
        if dims.nc_term == 0:
            return np.zeros(0), np.zeros((0, dims.nx))
        _check_args(problem, x, None)
        vals, (jx,) = ad.value_and_jacobian(problem.terminal_constraint, (x,), (p,))
        _check_out(vals, dims.nc_term, "terminal constraint")
        return vals, jx
    if dims.nc == 0:
        return np.zeros(0), np.zeros((0, dims.nx)), np.zeros((0, dims.nu))
    _check_args(problem, x, u)
    vals, (jx, ju) = ad.value_and_jacobian(problem.stage_constraint, (x, u), (p,))
    _check_out(vals, dims.nc, "stage constraint")
    return vals, jx, ju
