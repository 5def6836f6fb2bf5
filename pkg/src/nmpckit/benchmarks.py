"""Built-in benchmark problems, selectable by name.

Model parameters are fixed here and documented in the README; they are
chosen so the standard closed-loop experiments (pendulum swing-up within
+/-20 N, chain settling under unit velocity bounds) are feasible.
"""

import numpy as np

from . import autodiff as ad
from .model import ConfigurationError, Dims, make_problem

# Cart-pole data: cart mass, pole point mass, pole length, gravity.
CART_MASS = 1.0
POLE_MASS = 0.1
POLE_LENGTH = 0.8
GRAVITY = 9.81

# Hanging chain data: node mass, spring constant, spring rest length.
CHAIN_MASS = 0.45
CHAIN_STIFFNESS = 120.0
CHAIN_REST_LENGTH = 0.1

# Linear chain data: node mass, spring constant, damping.
LIN_CHAIN_MASS = 1.0
LIN_CHAIN_STIFFNESS = 4.0
LIN_CHAIN_DAMPING = 0.4


def pendulum(horizon=40, ts=0.05, weights=None, weights_term=None,
             input_limit=20.0):
    """Inverted pendulum on a cart; angle 0 hangs down, pi is upright.

    States (cart position, pole angle, cart velocity, pole rate), input is
    the horizontal force on the cart.  Online parameters hold the state
    reference, so swing-up tracks (0, pi, 0, 0).
    """

    def dynamics(x, u, p):
        _, ang, vel, om = x
        force = u[0]
        s = ad.sin(ang)
        c = ad.cos(ang)
        den = CART_MASS + POLE_MASS * s * s
        acc = (force + POLE_MASS * s * (POLE_LENGTH * om * om + GRAVITY * c)) / den
        ang_acc = -(
            (CART_MASS + POLE_MASS) * GRAVITY * s
            + c * (force + POLE_MASS * POLE_LENGTH * om * om * s)
        ) / (POLE_LENGTH * den)
        return [vel, om, acc, ang_acc]

    def stage_residual(x, u, p):
        return [x[0] - p[0], x[1] - p[1], x[2] - p[2], x[3] - p[3], u[0]]

    def terminal_residual(x, p):
        return [x[0] - p[0], x[1] - p[1], x[2] - p[2], x[3] - p[3]]

    def stage_constraint(x, u, p):
        return [u[0]]

    if weights is None:
        weights = [2.0, 20.0, 0.2, 0.2, 0.02]
    if weights_term is None:
        weights_term = [20.0, 200.0, 2.0, 2.0]
    dims = Dims(nx=4, nu=1, nr=5, nr_term=4, nc=1, nc_term=0,
                horizon=horizon, ts=ts, n_par=4)
    return make_problem(
        dims, dynamics, stage_residual, terminal_residual,
        np.diag(weights), np.diag(weights_term),
        stage_constraint=stage_constraint,
        con_lb=[-input_limit], con_ub=[input_limit],
        name="pendulum",
        meta={"upright": np.array([0.0, np.pi, 0.0, 0.0]),
              "hanging": np.zeros(4)})


def chain_mass(n_free=3, horizon=20, ts=0.1, weights=None, weights_term=None,
               velocity_limit=1.0):
    """Hanging chain of point masses; the free end is velocity-controlled.

    One end is pinned at the origin.  States are the 3-D positions and
    velocities of the free masses plus the position of the controlled end;
    the input is the controlled-end velocity.  Springs pull along the link
    with force k (|d| - L0) d / |d|; gravity acts on every free mass.
    Parameters hold the controlled-end position reference.
    """
    nx = 6 * n_free + 3
    nu = 3
    end_slice = slice(6 * n_free, 6 * n_free + 3)

    def _tension(a, b):
        d = [bi - ai for ai, bi in zip(a, b)]
        dist = ad.sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2])
        coef = CHAIN_STIFFNESS * (1.0 - CHAIN_REST_LENGTH / dist)
        return [coef * di for di in d]

    def dynamics(x, u, p):
        pts = [[0.0, 0.0, 0.0]]
        for i in range(n_free):
            pts.append(x[3 * i:3 * i + 3])
        pts.append(x[end_slice])
        tensions = [_tension(pts[j], pts[j + 1]) for j in range(n_free + 1)]
        out = list(x[3 * n_free:6 * n_free])  # position rates = velocities
        for i in range(n_free):
            t_lo = tensions[i + 1]
            t_hi = tensions[i]
            out.extend([
                (t_lo[0] - t_hi[0]) / CHAIN_MASS,
                (t_lo[1] - t_hi[1]) / CHAIN_MASS,
                (t_lo[2] - t_hi[2]) / CHAIN_MASS - GRAVITY,
            ])
        out.extend(u)
        return out

    def stage_residual(x, u, p):
        res = [x[end_slice][i] - p[i] for i in range(3)]
        res.extend(x[3 * n_free:6 * n_free])
        res.extend(u)
        return res

    def terminal_residual(x, p):
        res = [x[end_slice][i] - p[i] for i in range(3)]
        res.extend(x[3 * n_free:6 * n_free])
        return res

    def stage_constraint(x, u, p):
        return list(u)

    nr = 3 + 3 * n_free + 3
    nr_term = 3 + 3 * n_free
    if weights is None:
        weights = [25.0] * 3 + [0.25] * (3 * n_free) + [0.1] * 3
    if weights_term is None:
        weights_term = [50.0] * 3 + [1.0] * (3 * n_free)
    dims = Dims(nx=nx, nu=nu, nr=nr, nr_term=nr_term, nc=3, nc_term=0,
                horizon=horizon, ts=ts, n_par=3)
    x_eq = hanging_chain_equilibrium(n_free)
    return make_problem(
        dims, dynamics, stage_residual, terminal_residual,
        np.diag(weights), np.diag(weights_term),
        stage_constraint=stage_constraint,
        con_lb=[-velocity_limit] * 3, con_ub=[velocity_limit] * 3,
        name="chain_mass",
        meta={"equilibrium": x_eq, "n_free": n_free},
        probe_state=x_eq)


def hanging_chain_equilibrium(n_free):
    """Rest state of the vertical chain with a slack bottom link.

    Link j (counted from the anchor) carries the weight of the masses below
    it, so its stretch is (n_free - j) m g / k; the bottom link is at rest
    length.
    """
    x = np.zeros(6 * n_free + 3)
    z = 0.0
    for i in range(n_free):
        stretch = (n_free - i) * CHAIN_MASS * GRAVITY / CHAIN_STIFFNESS
        z -= CHAIN_REST_LENGTH + stretch
        x[3 * i + 2] = z
    x[6 * n_free + 2] = z - CHAIN_REST_LENGTH
    return x


def chain_mass_linear(n_masses=4, horizon=30, ts=0.1, weights=None,
                      weights_term=None, input_limit=10.0):
    """Linear 1-D chain of masses coupled by springs, force input at the end.

    The first mass is tied to a wall.  Dynamics are linear, the cost is
    quadratic, so the resulting OCP is an exact QP; it doubles as the
    one-iteration-convergence check problem.
    """
    nx = 2 * n_masses
    k = LIN_CHAIN_STIFFNESS / LIN_CHAIN_MASS
    c = LIN_CHAIN_DAMPING / LIN_CHAIN_MASS

    def dynamics(x, u, p):
        pos = x[:n_masses]
        vel = x[n_masses:]
        out = list(vel)
        for i in range(n_masses):
            left = pos[i - 1] if i > 0 else 0.0
            acc = k * (left - pos[i]) - c * vel[i]
            if i < n_masses - 1:
                acc = acc + k * (pos[i + 1] - pos[i])
            if i == n_masses - 1:
                acc = acc + u[0] / LIN_CHAIN_MASS
            out.append(acc)
        return out

    def stage_residual(x, u, p):
        return list(x) + [u[0]]

    def terminal_residual(x, p):
        return list(x)

    def stage_constraint(x, u, p):
        return [u[0]]

    if weights is None:
        weights = [4.0] * n_masses + [1.0] * n_masses + [0.1]
    if weights_term is None:
        weights_term = [8.0] * n_masses + [2.0] * n_masses
    dims = Dims(nx=nx, nu=1, nr=nx + 1, nr_term=nx, nc=1, nc_term=0,
                horizon=horizon, ts=ts, n_par=0)
    return make_problem(
        dims, dynamics, stage_residual, terminal_residual,
        np.diag(weights), np.diag(weights_term),
        stage_constraint=stage_constraint,
        con_lb=[-input_limit], con_ub=[input_limit],
        name="chain_mass_linear")


REGISTRY = {
    "pendulum": pendulum,
    "chain_mass": chain_mass,
    "chain_mass_linear": chain_mass_linear,
}


def names():
    return sorted(REGISTRY)


def make(name, **overrides):
    """Instantiate a registered benchmark, applying factory overrides."""
    try:
        factory = REGISTRY[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown benchmark {name!r}; available: {', '.join(names())}") from None
    return factory(**overrides)


def default_state(problem):
    """Conventional closed-loop start state for a benchmark."""
    if problem.name == "pendulum":
        return problem.meta["hanging"].copy()
    if problem.name == "chain_mass":
        return problem.meta["equilibrium"].copy()
    return np.zeros(problem.dims.nx)


def default_reference(problem):
    """Conventional tracking reference (one parameter vector)."""
    if problem.name == "pendulum":
        return problem.meta["upright"].copy()
    if problem.name == "chain_mass":
        eq = problem.meta["equilibrium"]
        ref = eq[-3:].copy()
        ref[0] += 0.2
        ref[1] += 0.1
        return ref
    return np.zeros(problem.dims.n_par)
