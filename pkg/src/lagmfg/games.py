"""Builders and closed-form references for the example games.

Every builder returns a :class:`GameSpec` wired with analytic derivatives and,
where the pointwise minimizer has a closed form, a fused ``flow`` so that the
shooting solver avoids the generic Newton minimization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import PreconditionError
from .model import (ControlAffineDynamics, ControlProblem, GameSpec, MomentKernelSet, PlayerEnsemble,
                    RunningCost, TerminalCost, TimeGrid, barycenter_kernels)

# ---------------------------------------------------------------------------
# shared pieces


def integrator_dynamics(n: int, u_lo=None, u_hi=None) -> ControlAffineDynamics:
    """``xdot = u`` in R^n."""
    eye = np.eye(n)
    return ControlAffineDynamics(
        state_dim=n, control_dim=n,
        drift=lambda t, x, eta: np.zeros(np.shape(x)),
        fields=lambda t, x, eta: np.broadcast_to(eye, np.shape(x)[:-1] + (n, n)),
        drift_x=lambda t, x, eta: np.zeros(np.shape(x) + (n,)),
        fields_x=lambda t, x, eta: np.zeros(np.shape(x) + (n, n)),
        u_lo=u_lo, u_hi=u_hi, growth_c1=1.0,
    )


def quadratic_control_cost(n: int, extra: Callable | None = None, extra_x: Callable | None = None,
                           coercivity: float | None = 1.0) -> RunningCost:
    """``L = |u|^2 + extra(t, x, eta)``."""
    eye2 = 2.0 * np.eye(n)

    def value(t, x, u, eta):
        out = np.sum(u * u, axis=-1)
        return out if extra is None else out + extra(t, x, eta)

    def grad_x(t, x, u, eta):
        return np.zeros(np.shape(x)) if extra_x is None else extra_x(t, x, eta) + 0.0 * u

    return RunningCost(
        value=value, grad_x=grad_x,
        grad_u=lambda t, x, u, eta: 2.0 * u,
        hess_uu=lambda t, x, u, eta: np.broadcast_to(eye2, np.shape(u) + (n,)),
        convexity=2.0, coercivity=coercivity, quadratic_in_u=True,
    )


def free_particle_flow(extra: Callable | None = None, extra_x: Callable | None = None) -> Callable:
    """Reduced flow for ``xdot = u``, ``L = |u|^2 + extra``: ``u = -p/2``."""

    def flow(t, x, p, eta):
        u = -0.5 * p
        L = np.sum(u * u, axis=-1)
        if extra is None:
            return u, np.zeros(np.shape(p)), L, u
        return u, -extra_x(t, x, eta), L + extra(t, x, eta), u

    return flow


def single_player(xbar, n: int, support_radius: float | None = None) -> PlayerEnsemble:
    return PlayerEnsemble.midpoint(np.full(n, 0.0) + np.asarray(xbar, dtype=float), 1, state_dim=n,
                                   support_radius=support_radius)


@dataclass
class ExampleBundle:
    """A built game plus its analytic references."""

    name: str
    params: dict
    spec: GameSpec | None
    reference: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# simple single-player problems


def target_game(c=1.0, T: float = 1.0, K: int = 200, xbar=0.0, n: int = 1) -> GameSpec:
    """``xdot = u``, ``J = int |u|^2 + |x(T) - c|^2`` with a constant target ``c``."""
    c = np.broadcast_to(np.asarray(c, dtype=float), (n,)).copy()
    eye2 = 2.0 * np.eye(n)
    terminal = TerminalCost(
        value=lambda x, e: np.sum((x - c) ** 2, axis=-1),
        grad=lambda x, e: 2.0 * (x - c),
        hess=lambda x, e: np.broadcast_to(eye2, np.shape(x) + (n,)),
        positive=True,
    )
    return GameSpec(integrator_dynamics(n), quadratic_control_cost(n), terminal, barycenter_kernels(n),
                    single_player(xbar, n), TimeGrid(T, K), reach_radius=2.0 * (1.0 + float(np.max(np.abs(c)))),
                    name="target", params=dict(c=c.tolist(), T=T, K=K, xbar=xbar), flow=free_particle_flow())


def target_closed_form(t, c, T: float, xbar=0.0):
    """Optimal trajectory ``x(t) = xbar + t (c - xbar) / (1 + T)``."""
    t = np.asarray(t, dtype=float)
    c = np.asarray(c, dtype=float)
    xbar = np.asarray(xbar, dtype=float)
    return xbar + np.multiply.outer(t, c - xbar) / (1.0 + T)


def double_well_game(xbar=0.0, T: float = 1.0, K: int = 200, tilt: float = 0.0) -> GameSpec:
    """``xdot = u``, ``L = u^2``, ``psi = (x^2 - 1)^2 + tilt * x``."""
    terminal = TerminalCost(
        value=lambda x, e: (x[..., 0] ** 2 - 1.0) ** 2 + tilt * x[..., 0],
        grad=lambda x, e: 4.0 * x * (x * x - 1.0) + tilt,
        hess=lambda x, e: (12.0 * x * x - 4.0)[..., None],
    )
    return GameSpec(integrator_dynamics(1), quadratic_control_cost(1), terminal, barycenter_kernels(1),
                    single_player(xbar, 1), TimeGrid(T, K), reach_radius=3.0 + abs(float(xbar)),
                    name="double_well", params=dict(xbar=xbar, T=T, K=K, tilt=tilt), flow=free_particle_flow())


def double_well_roots(xbar: float = 0.0, T: float = 1.0, tilt: float = 0.0) -> np.ndarray:
    """Terminal points of all extremals: real roots of ``y + T psi'(y) / 2 = xbar``."""
    # 2T y^3 + (1 - 2T) y + T tilt / 2 - xbar = 0
    roots = np.roots([2.0 * T, 0.0, 1.0 - 2.0 * T, 0.5 * T * tilt - xbar])
    real = np.sort(roots[np.abs(roots.imag) < 1e-9].real)
    return real


def double_well_cost(y, xbar: float = 0.0, T: float = 1.0, tilt: float = 0.0):
    """Value of the extremal ending at ``y``: ``(y - xbar)^2 / T + psi(y)``."""
    y = np.asarray(y, dtype=float)
    return (y - xbar) ** 2 / T + (y * y - 1.0) ** 2 + tilt * y


# ---------------------------------------------------------------------------
# rotation-map games


def rotation(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def phi1(x, theta0: float) -> np.ndarray:
    """Cartesian form of ``(r, theta) -> (2r / (1 + r^2), theta + theta0)``."""
    x = np.asarray(x, dtype=float)
    r2 = np.sum(x * x, axis=-1, keepdims=True)
    return 2.0 / (1.0 + r2) * (x @ rotation(theta0).T)


def phi2(x) -> np.ndarray:
    """Cartesian form of ``(r, theta) -> (r / (1 + r^2), theta)``."""
    x = np.asarray(x, dtype=float)
    r2 = np.sum(x * x, axis=-1, keepdims=True)
    return x / (1.0 + r2)


def radial_map(r, variant: str):
    r = np.asarray(r, dtype=float)
    if variant == "phi1_unstable":
        return 2.0 * r / (1.0 + r * r)
    if variant == "phi2_stable":
        return r / (1.0 + r * r)
    raise ValueError(f"unknown rotation variant {variant!r}")


ROTATION_VARIANTS = ("phi1_unstable", "phi2_stable")


def rotation_game(variant: str = "phi1_unstable", T: float = 1.0, theta0: float = math.pi / 3,
                  K: int = 20) -> GameSpec:
    """Planar game ``J = int |u|^2 + |x(T) - Psi(b(T))|^2``, ``Psi = (1+T)/T * phi``.

    All players start at the origin, so one representative player suffices.
    """
    if variant not in ROTATION_VARIANTS:
        raise ValueError(f"variant must be one of {ROTATION_VARIANTS}, got {variant!r}")
    if not 0.0 < theta0 < 2.0 * math.pi:
        raise ValueError("theta0 must lie in (0, 2 pi)")
    scale = (1.0 + T) / T
    if variant == "phi1_unstable":
        target = lambda b: scale * phi1(b, theta0)
    else:
        target = lambda b: scale * phi2(b)
    eye2 = 2.0 * np.eye(2)
    terminal = TerminalCost(
        value=lambda x, e: np.sum((x - target(e)) ** 2, axis=-1),
        grad=lambda x, e: 2.0 * (x - target(e)),
        hess=lambda x, e: np.broadcast_to(eye2, np.shape(x) + (2,)),
        positive=True,
    )
    return GameSpec(integrator_dynamics(2), quadratic_control_cost(2), terminal, barycenter_kernels(2),
                    single_player(np.zeros(2), 2), TimeGrid(T, K), reach_radius=2.0 * (1.0 + 2.0 * scale),
                    name="rotation", params=dict(variant=variant, T=T, theta0=theta0, K=K),
                    flow=free_particle_flow())


def rotation_initial_path(grid: TimeGrid, r0: float, angle: float = 0.0) -> np.ndarray:
    """Barycenter path ``b(t) = (t / T) r0 (cos a, sin a)`` (only ``b(T)`` matters)."""
    return np.outer(grid.nodes / grid.horizon, r0 * np.array([math.cos(angle), math.sin(angle)]))


# ---------------------------------------------------------------------------
# two-well game


def two_well_game(kappa: float = 2.0, T: float = 3.0, K: int = 200) -> GameSpec:
    """``L = u^2 + 1/(1+x^2) + kappa (x - b)^2``, ``xdot = u``, ``x(0) = 0``, ``psi = 0``.

    Requires ``kappa > 1`` and ``T > sqrt(2)``; whether the stronger ``T > 2``
    (the three-solution statement) holds is recorded in ``params``.
    """
    if not kappa > 1.0:
        raise ValueError(f"two_well requires kappa > 1, got {kappa}")
    if not T > math.sqrt(2.0):
        raise ValueError(f"two_well requires T > sqrt(2), got {T}")

    def extra(t, x, eta):
        x0 = x[..., 0]
        return 1.0 / (1.0 + x0 * x0) + kappa * (x0 - eta[..., 0]) ** 2

    def extra_x(t, x, eta):
        return -2.0 * x / (1.0 + x * x) ** 2 + 2.0 * kappa * (x - eta[..., :1])

    terminal = TerminalCost(value=lambda x, e: np.zeros(np.shape(x)[:-1]), grad=lambda x, e: np.zeros(np.shape(x)),
                            hess=lambda x, e: np.zeros(np.shape(x) + (1,)), positive=True)
    return GameSpec(integrator_dynamics(1), quadratic_control_cost(1, extra, extra_x), terminal,
                    barycenter_kernels(1), single_player(0.0, 1), TimeGrid(T, K), reach_radius=10.0,
                    name="two_well", params=dict(kappa=kappa, T=T, K=K, large_horizon=bool(T > 2.0)),
                    flow=free_particle_flow(extra, extra_x))


def energy(y, ydot):
    """Kinetic plus potential energy ``ydot^2 / 2 - 1 / (2 (1 + y^2))``."""
    y = np.asarray(y, dtype=float)
    ydot = np.asarray(ydot, dtype=float)
    return 0.5 * ydot * ydot - 0.5 / (1.0 + y * y)


def sandwich_bounds(t, c: float):
    """Lower and upper comparison bounds for ``y(t, c)``; valid for ``t <= sqrt(2 (1 + c^2))``."""
    t = np.asarray(t, dtype=float)
    lower = c - c * (1.0 - t / (2.0 * (1.0 + c * c))) ** 2
    upper = c - c * (1.0 - t / math.sqrt(2.0 * (1.0 + c * c))) ** 2
    return lower, upper


def _theta_at(T: float, c, steps: int = 2000) -> np.ndarray:
    """RK4 for ``theta' = 1 / sqrt((1 + c^2 sin^2 theta)(1 + c^2))`` with ``y = c sin theta``.

    This is the monotone-branch equation with the square-root fold at ``y = c``
    removed (``theta = pi/2`` there); vectorized over ``c``.
    """
    c = np.asarray(c, dtype=float)
    a = 1.0 + c * c
    f = lambda th: 1.0 / np.sqrt((1.0 + (c * np.sin(th)) ** 2) * a)
    th = np.zeros_like(c)
    h = T / steps
    for _ in range(steps):
        k1 = f(th)
        k2 = f(th + 0.5 * h * k1)
        k3 = f(th + 0.5 * h * k2)
        k4 = f(th + h * k3)
        th = th + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return th


def reach_time(c: float) -> float:
    """Time for the monotone branch with turning point ``c`` to reach ``y = c``."""
    from scipy.integrate import quad
    val, _ = quad(lambda th: math.sqrt(1.0 + (c * math.sin(th)) ** 2), 0.0, math.pi / 2, epsabs=1e-14, epsrel=1e-14)
    return math.sqrt(1.0 + c * c) * val


@dataclass
class MonotoneSolution:
    """The increasing solution ``y1`` of the Euler-Lagrange problem."""

    T: float
    M: float
    residual: float
    t: np.ndarray
    y: np.ndarray
    ydot: np.ndarray
    energy_drift: float
    lower_bracket: float
    bracket_expansions: int
    sandwich_ok: bool
    sandwich_window: float

    @property
    def strictly_increasing(self) -> bool:
        return bool(np.min(np.diff(self.y)) > 0)

    @property
    def min_forward_difference(self) -> float:
        return float(np.min(np.diff(self.y)))


def solve_el_monotone(T: float, tol: float = 1e-10, K: int = 1000, c_hi: float | None = None,
                      theta_steps: int = 4000) -> MonotoneSolution:
    """Turning point ``M`` with ``y(T, M) = M`` and the increasing trajectory ``y1``.

    ``y(., c)`` is integrated in the angle form ``y = c sin theta`` (regular at
    the fold ``y = c``).  Bisection runs on ``theta(T; c) - pi/2``, which changes
    sign exactly where ``y(T, c) = c`` with ``ydot(T) = 0``.  The bracket starts
    at ``[sqrt((T^2-2)/2), c_hi]`` and is expanded (up to 10 times each way) until
    it contains a sign change.  The trajectory is then re-integrated as the
    second-order Euler-Lagrange equation with RK4 on ``K`` steps from
    ``(0, M / sqrt(1 + M^2))``; ``energy_drift`` is measured on that integration.
    """
    if not T > math.sqrt(2.0):
        raise PreconditionError(f"solve_el_monotone needs T > sqrt(2), got {T}")
    lo = math.sqrt((T * T - 2.0) / 2.0)
    hi = c_hi if c_hi is not None else max(2.0 * lo, 1.0)
    g = lambda c: float(_theta_at(T, np.array([c]), theta_steps)[0] - math.pi / 2)
    expansions = 0
    glo, ghi = g(lo), g(hi)
    while glo * ghi > 0 and expansions < 10:
        # theta(T; c) decreases with c: a negative value at the lower end means M lies below it
        if glo < 0:
            hi, ghi = lo, glo
            lo = lo / 2.0
            glo = g(lo)
        else:
            lo, glo = hi, ghi
            hi = 2.0 * hi
            ghi = g(hi)
        expansions += 1
    if glo * ghi > 0:
        raise PreconditionError(f"no monotone solution bracketed for T={T} (needs T > pi/2)")
    a, b = lo, hi
    for _ in range(200):
        mid = 0.5 * (a + b)
        gm = g(mid)
        if gm == 0.0:
            a = b = mid
            break
        if (gm > 0) == (glo > 0):
            a, glo = mid, gm
        else:
            b = mid
        if b - a < 1e-15 * max(1.0, b):
            break
    M = 0.5 * (a + b)
    th_T = float(_theta_at(T, np.array([M]), theta_steps)[0])
    residual = abs(M * math.sin(th_T) - M)
    if residual >= tol:
        raise PreconditionError(f"monotone solution residual {residual:.3e} above tol {tol:.1e}")
    # second-order EL equation y'' = -y / (1 + y^2)^2
    h = T / K
    t = np.linspace(0.0, T, K + 1)
    y = np.empty(K + 1)
    v = np.empty(K + 1)
    y[0], v[0] = 0.0, M / math.sqrt(1.0 + M * M)
    acc = lambda z: -z / (1.0 + z * z) ** 2
    for k in range(K):
        y0, v0 = y[k], v[k]
        k1y, k1v = v0, acc(y0)
        k2y, k2v = v0 + 0.5 * h * k1v, acc(y0 + 0.5 * h * k1y)
        k3y, k3v = v0 + 0.5 * h * k2v, acc(y0 + 0.5 * h * k2y)
        k4y, k4v = v0 + h * k3v, acc(y0 + h * k3y)
        y[k + 1] = y0 + h / 6.0 * (k1y + 2 * k2y + 2 * k3y + k4y)
        v[k + 1] = v0 + h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
    E = energy(y, v)
    window = min(T, math.sqrt(2.0 * (1.0 + M * M)))
    inside = t <= window
    lower, upper = sandwich_bounds(t[inside], M)
    sandwich_ok = bool(np.all(lower <= y[inside] + 1e-12) and np.all(y[inside] <= upper + 1e-12))
    return MonotoneSolution(T, M, residual, t, y, v, float(np.max(np.abs(E - E[0]))), lo, expansions,
                            sandwich_ok, window)


def two_well_fixed_points(kappa: float = 2.0, T: float = 3.0, K: int = 200) -> dict:
    """Continuous references ``{0, y1, -y1}`` sampled on the game grid."""
    sol = solve_el_monotone(T, K=K)
    return {"zero": np.zeros(K + 1), "y1": sol.y.copy(), "minus_y1": -sol.y}


# ---------------------------------------------------------------------------
# Example with a Gaussian kernel (no strong solution)


def kernel_game(T: float = 1.0, players: int = 20, K: int = 20) -> GameSpec:
    """Players ``xi_j`` maximize ``|x(T) - b(xi)|^2`` with ``xdot = u in [-1, 1]``.

    The state is augmented to ``(x, xi)`` with ``xi`` frozen, so moment ``j`` is
    ``b(xi_j) = sum_k w_k exp(-(xi_k - xi_j)^2) x_k(T)``; ``b`` between nodes is
    piecewise-linear.  The objective is minimized as ``-|x(T) - b(xi)|^2`` with
    zero running cost; the pointwise minimizer is bang-bang ``u = -sign(p_x)``.
    """
    nodes = (np.arange(players) + 0.5) / players
    weights = np.full(players, 1.0 / players)
    ens = PlayerEnsemble(nodes, weights, np.column_stack([np.zeros(players), nodes]))

    def b_of(xi, eta_T):
        xi = np.asarray(xi, dtype=float)
        eta_T = np.asarray(eta_T, dtype=float)
        if eta_T.ndim == 1:
            return np.interp(xi, nodes, eta_T)
        flat_xi = np.broadcast_to(xi, eta_T.shape[:-1]).reshape(-1)
        flat_eta = eta_T.reshape(-1, players)
        return np.array([np.interp(a, nodes, e) for a, e in zip(flat_xi, flat_eta)]).reshape(eta_T.shape[:-1])

    def psi(x, e):
        return -(x[..., 0] - b_of(x[..., 1], e)) ** 2

    fields_const = np.array([[1.0], [0.0]])
    dyn = ControlAffineDynamics(
        state_dim=2, control_dim=1,
        drift=lambda t, x, eta: np.zeros(np.shape(x)),
        fields=lambda t, x, eta: np.broadcast_to(fields_const, np.shape(x)[:-1] + (2, 1)),
        drift_x=lambda t, x, eta: np.zeros(np.shape(x) + (2,)),
        fields_x=lambda t, x, eta: np.zeros(np.shape(x)[:-1] + (2, 1, 2)),
        u_lo=-1.0, u_hi=1.0, growth_c1=1.0,
    )
    running = RunningCost(
        value=lambda t, x, u, eta: np.zeros(np.shape(x)[:-1]),
        grad_x=lambda t, x, u, eta: np.zeros(np.shape(x)),
        grad_u=lambda t, x, u, eta: np.zeros(np.shape(u)),
        hess_uu=lambda t, x, u, eta: np.zeros(np.shape(u) + (1,)),
        convexity=0.0, quadratic_in_u=True,
    )

    def kern(t, x):
        return np.exp(-(x[..., 1:2] - nodes) ** 2) * x[..., 0:1]

    def kern_x(t, x):
        g = np.exp(-(x[..., 1:2] - nodes) ** 2)
        return np.stack([g, -2.0 * (x[..., 1:2] - nodes) * g * x[..., 0:1]], axis=-1)

    def flow(t, x, p, eta):
        u = -np.sign(p[..., :1])
        xdot = np.concatenate([u, np.zeros_like(u)], axis=-1)
        return xdot, np.zeros(np.shape(p)), np.zeros(np.shape(p)[:-1]), u

    return GameSpec(dyn, running, TerminalCost(psi), MomentKernelSet(players, kern, kern_x), ens,
                    TimeGrid(T, K), reach_radius=T + 1.0, control_radius=1.0, name="no_solution_kernel",
                    params=dict(T=T, players=players, K=K), flow=flow)


def gaussian_gram(nodes, weights) -> np.ndarray:
    """``G_jk = exp(-|xi_j - xi_k|^2) w_j w_k``."""
    nodes = np.asarray(nodes, dtype=float)
    weights = np.asarray(weights, dtype=float)
    return np.exp(-np.subtract.outer(nodes, nodes) ** 2) * np.outer(weights, weights)


# ---------------------------------------------------------------------------
# Example with a terminal constraint (no solution at all)


@dataclass
class TerminalConstraintReply:
    """Best reply of the terminal-constraint game for a given profile ``X``."""

    trajectory: np.ndarray
    cost: float
    terminal: float
    barycenter_zero: bool
    reachable_T: bool


def terminal_constraint_reply(X: np.ndarray, t: np.ndarray, T: float, mode: str = "stated",
                              zero_tol: float = 1e-12) -> TerminalConstraintReply:
    """Case analysis of ``xdot = u - b^2``, ``|u| <= 1``, ``x(T) in {0, T}``, ``psi(0)=0, psi(T)=-2T``.

    ``X`` holds the barycenter samples ``b(t_k)``.  If ``b = 0`` the trajectory
    ``x = t`` reaches ``T`` at cost ``T - 2T = -T``.  Otherwise ``x(T) = T`` is
    unreachable because ``max x(T) = T - int b^2 < T``.  ``mode="stated"`` then
    returns ``x = 0`` with cost 0.  ``mode="exact"`` returns the cheapest
    trajectory that actually satisfies ``x(T) = 0``: ``u = B/T`` with
    ``B = int b^2``, cost ``B^2 / T``.  It is empty (NaN) when ``B > T``.
    """
    X = np.asarray(X, dtype=float)
    t = np.asarray(t, dtype=float)
    b2 = X * X
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (b2[1:] + b2[:-1]) * np.diff(t))])
    B = float(cum[-1])
    zero = bool(np.max(np.abs(X)) <= zero_tol)
    if zero:
        return TerminalConstraintReply(t.copy(), -T, T, True, True)
    if mode == "stated":
        return TerminalConstraintReply(np.zeros_like(t), 0.0, 0.0, False, False)
    if mode != "exact":
        raise ValueError("mode must be 'stated' or 'exact'")
    if B > T:
        return TerminalConstraintReply(np.full_like(t, np.nan), float("nan"), float("nan"), False, False)
    return TerminalConstraintReply(B / T * t - cum, B * B / T, 0.0, False, False)


# ---------------------------------------------------------------------------
# synthesized MFG


@dataclass
class SynthesizedMFG:
    """Penalized MFG whose solution reproduces a given PMP extremal ``x*``."""

    spec: GameSpec
    x_star: np.ndarray
    p_star: np.ndarray
    kappa: float
    base_residual: float


def synthesize_mfg(base: GameSpec, trajectory, kappa: float, verify_tol: float = 1e-8,
                   players: int = 1) -> SynthesizedMFG:
    """All players minimize ``base cost + kappa |x - b|^2`` with ``b`` the barycenter.

    ``base`` must be uncoupled (its callbacks ignore the moment argument) and
    ``trajectory`` a PMP extremal of it from the ensemble's initial point: the
    backward re-integration from its terminal point must reproduce it within
    ``verify_tol``.
    """
    from .pmp import backward_sweep

    if not kappa > 0:
        raise ValueError("kappa must be positive")
    n = base.dynamics.state_dim
    xbar = base.ensemble.initial_points[0]
    zeros = np.zeros((base.grid.steps + 1, base.kernels.count))
    sw = backward_sweep(base.problem, trajectory.terminal[None], zeros)
    resid = float(max(np.max(np.abs(sw.states[:, 0] - trajectory.states)),
                      np.max(np.abs(sw.states[0, 0] - xbar))))
    if not sw.ok[0] or resid > verify_tol:
        raise PreconditionError(f"trajectory fails the base PMP check (residual {resid:.3e})")
    run = base.running

    def value(t, x, u, eta):
        return run.L(t, x, u, eta) + kappa * np.sum((x - eta) ** 2, axis=-1)

    def grad_x(t, x, u, eta):
        return run.L_x(t, x, u, eta) + 2.0 * kappa * (x - eta)

    running = RunningCost(value, grad_x, run.grad_u, run.hess_uu, run.convexity, run.coercivity, run.quadratic_in_u)
    flow = None
    if base.flow is not None:
        bflow = base.flow

        def flow(t, x, p, eta):
            xdot, pdot, L, u = bflow(t, x, p, eta)
            d = x - eta
            return xdot, pdot - 2.0 * kappa * d, L + kappa * np.sum(d * d, axis=-1), u

    ens = PlayerEnsemble.midpoint(xbar, players, state_dim=n)
    spec = GameSpec(base.dynamics, running, base.terminal, barycenter_kernels(n), ens, base.grid,
                    base.reach_radius, base.control_radius, name=f"synthesized[{base.name}]",
                    params=dict(base=base.name, kappa=kappa, **{f"base_{k}": v for k, v in base.params.items()}),
                    flow=flow)
    return SynthesizedMFG(spec, trajectory.states.copy(), trajectory.adjoints.copy(), kappa, resid)


# ---------------------------------------------------------------------------
# oracle agreement suite


def _nonlinear_problem(K: int) -> tuple[ControlProblem, np.ndarray]:
    """``xdot = -0.5 sin x + (1 + 0.3 cos x) u``, ``L = u^2 + 0.1 u^4 + 0.5 x^2``, ``psi = (x - 1)^2``."""
    dyn = ControlAffineDynamics(
        1, 1,
        drift=lambda t, x, e: -0.5 * np.sin(x),
        fields=lambda t, x, e: (1.0 + 0.3 * np.cos(x))[..., None],
        drift_x=lambda t, x, e: (-0.5 * np.cos(x))[..., None],
        fields_x=lambda t, x, e: (-0.3 * np.sin(x))[..., None, None],
        growth_c1=1.3,
    )
    run = RunningCost(
        value=lambda t, x, u, e: u[..., 0] ** 2 + 0.1 * u[..., 0] ** 4 + 0.5 * x[..., 0] ** 2,
        grad_x=lambda t, x, u, e: x + 0.0 * u,
        grad_u=lambda t, x, u, e: 2.0 * u + 0.4 * u ** 3,
        hess_uu=lambda t, x, u, e: (2.0 + 1.2 * u * u)[..., None],
        convexity=2.0, coercivity=1.0,
    )
    term = TerminalCost(lambda x, e: (x[..., 0] - 1.0) ** 2, lambda x, e: 2.0 * (x - 1.0),
                        lambda x, e: np.full(np.shape(x) + (1,), 2.0), positive=True)
    return ControlProblem(dyn, run, term, TimeGrid(1.0, K)), np.array([0.2])


def _bounded_oscillator(K: int) -> tuple[ControlProblem, np.ndarray]:
    """``x1' = x2, x2' = u``, ``|u| <= 1``, ``L = u^2 + x1^2``, ``psi = 5 (x1 - 1)^2 + x2^2``."""
    dyn = ControlAffineDynamics(
        2, 1,
        drift=lambda t, x, e: np.stack([x[..., 1], np.zeros(np.shape(x)[:-1])], axis=-1),
        fields=lambda t, x, e: np.broadcast_to(np.array([[0.0], [1.0]]), np.shape(x)[:-1] + (2, 1)),
        drift_x=lambda t, x, e: np.broadcast_to(np.array([[0.0, 1.0], [0.0, 0.0]]), np.shape(x)[:-1] + (2, 2)),
        fields_x=lambda t, x, e: np.zeros(np.shape(x)[:-1] + (2, 1, 2)),
        u_lo=-1.0, u_hi=1.0, growth_c1=1.0,
    )
    run = RunningCost(
        value=lambda t, x, u, e: u[..., 0] ** 2 + x[..., 0] ** 2,
        grad_x=lambda t, x, u, e: np.stack([2.0 * x[..., 0], np.zeros(np.shape(x)[:-1])], axis=-1),
        grad_u=lambda t, x, u, e: 2.0 * u,
        hess_uu=lambda t, x, u, e: np.full(np.shape(u) + (1,), 2.0),
        convexity=2.0, quadratic_in_u=True,
    )
    H = np.diag([10.0, 2.0])
    term = TerminalCost(lambda x, e: 5.0 * (x[..., 0] - 1.0) ** 2 + x[..., 1] ** 2,
                        lambda x, e: np.stack([10.0 * (x[..., 0] - 1.0), 2.0 * x[..., 1]], axis=-1),
                        lambda x, e: np.broadcast_to(H, np.shape(x) + (2,)), positive=True)
    return ControlProblem(dyn, run, term, TimeGrid(2.0, K)), np.zeros(2)


def agreement_suite(K: int = 100) -> list[tuple[str, ControlProblem, np.ndarray, np.ndarray]]:
    """Five smooth problems ``(name, problem, xbar, eta samples)`` for oracle agreement."""
    out = []
    tg = target_game(c=1.0, T=1.0, K=K)
    out.append(("target", tg.problem, tg.ensemble.initial_points[0], np.zeros((K + 1, 1))))
    dw = double_well_game(xbar=0.5, K=K)
    out.append(("double_well_0.5", dw.problem, dw.ensemble.initial_points[0], np.zeros((K + 1, 1))))
    tw = two_well_game(kappa=2.0, T=2.0, K=K)
    b = 0.5 * np.sin(tw.grid.nodes)[:, None]
    out.append(("two_well_fixed_b", tw.problem, np.array([0.1]), b))
    pb, xb = _nonlinear_problem(K)
    out.append(("nonlinear_generic", pb, xb, np.zeros((K + 1, 1))))
    pb, xb = _bounded_oscillator(K)
    out.append(("bounded_oscillator", pb, xb, np.zeros((K + 1, 1))))
    return out


# ---------------------------------------------------------------------------
# registry


def constant_toy_game(K: int = 50, T: float = 1.0) -> GameSpec:
    """Target game whose players ignore the moments, so the best reply is constant."""
    spec = target_game(c=0.7, T=T, K=K)
    return GameSpec(spec.dynamics, spec.running, spec.terminal, spec.kernels, spec.ensemble, spec.grid,
                    spec.reach_radius, name="constant_toy", params=dict(K=K, T=T), flow=spec.flow)


def build_example(name: str, **params) -> ExampleBundle:
    """Build a named example game with its analytic references."""
    from . import spectral

    p = dict(params)
    if name == "rotation":
        variant = p.get("variant", "phi1_unstable")
        variant = {"phi1": "phi1_unstable", "phi2": "phi2_stable"}.get(variant, variant)
        p["variant"] = variant
        spec = rotation_game(variant, float(p.get("T", 1.0)), float(p.get("theta0", math.pi / 3)), int(p.get("K", 20)))
        theta0 = float(p.get("theta0", math.pi / 3))
        mapping = (lambda b: phi1(b, theta0)) if variant == "phi1_unstable" else phi2
        return ExampleBundle(name, p, spec, dict(map=mapping, radial_map=lambda r: radial_map(r, variant),
                                                 fixed_point=np.zeros(2)))
    if name == "two_well":
        kappa, T, K = float(p.get("kappa", 2.0)), float(p.get("T", 3.0)), int(p.get("K", 200))
        spec = two_well_game(kappa, T, K)
        ref = dict(spectrum=lambda n_max=5: spectral.analytic_spectrum_barycenter(kappa, T, n_max),
                   monotone=lambda tol=1e-10: solve_el_monotone(T, tol, K=K) if T > math.pi / 2 else None,
                   large_horizon=T > 2.0)
        return ExampleBundle(name, p, spec, ref)
    if name in ("double_well", "tilted_double_well"):
        tilt = float(p.get("tilt", 0.1 if name == "tilted_double_well" else 0.0))
        xbar, T, K = float(p.get("xbar", 0.0)), float(p.get("T", 1.0)), int(p.get("K", 200))
        spec = double_well_game(xbar, T, K, tilt)
        return ExampleBundle(name, p, spec, dict(roots=double_well_roots(xbar, T, tilt),
                                                 cost=lambda y: double_well_cost(y, xbar, T, tilt)))
    if name in ("target", "convex"):
        c, T, K = p.get("c", 1.0), float(p.get("T", 1.0)), int(p.get("K", 200))
        xbar = p.get("xbar", 0.0)
        spec = target_game(c, T, K, xbar)
        return ExampleBundle(name, p, spec, dict(trajectory=lambda t: target_closed_form(t, np.atleast_1d(c), T,
                                                                                            np.atleast_1d(xbar))))
    if name == "no_solution_kernel":
        T, players, K = float(p.get("T", 1.0)), int(p.get("players", 20)), int(p.get("K", 20))
        spec = kernel_game(T, players, K)
        return ExampleBundle(name, p, spec, dict(gram=gaussian_gram(spec.ensemble.nodes, spec.ensemble.weights)))
    if name == "terminal_constraint":
        T = float(p.get("T", 1.0))
        return ExampleBundle(name, p, None, dict(reply=lambda X, t, mode="stated": terminal_constraint_reply(X, t, T, mode)))
    if name == "synthesized":
        from .pmp import ShootingConfig, solve_ocp
        kappa, K = float(p.get("kappa", 50.0)), int(p.get("K", 100))
        branch = int(p.get("branch", 1))
        base = double_well_game(float(p.get("xbar", 0.0)), float(p.get("T", 1.0)), K)
        sol = solve_ocp(base.ensemble.initial_points[0], base.problem, None, ShootingConfig(box_radius=2.0))
        traj = sol.candidates[sol.optimal[-1] if branch > 0 else sol.optimal[0]]
        syn = synthesize_mfg(base, traj, kappa)
        return ExampleBundle(name, p, syn.spec, dict(x_star=syn.x_star, synthesized=syn))
    if name == "constant_toy":
        return ExampleBundle(name, p, constant_toy_game(int(p.get("K", 50)), float(p.get("T", 1.0))), {})
    raise ValueError(f"unknown example {name!r}; choose from {sorted(EXAMPLES)}")


EXAMPLES = ("rotation", "two_well", "double_well", "tilted_double_well", "target", "convex",
            "no_solution_kernel", "terminal_constraint", "synthesized", "constant_toy")


# ---------------------------------------------------------------------------
# nonexistence certificates


@dataclass
class CertificateReport:
    """Checks and numbers behind a nonexistence argument; ``passed`` summarizes ``checks``."""

    variant: str
    checks: dict
    values: dict

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def to_dict(self) -> dict:
        def clean(v):
            if isinstance(v, np.ndarray):
                return v.tolist()
            if isinstance(v, (np.floating, np.integer, np.bool_)):
                return v.item()
            if isinstance(v, (list, tuple)):
                return [clean(a) for a in v]
            return v
        return dict(variant=self.variant, passed=self.passed, checks={k: bool(v) for k, v in self.checks.items()},
                    values={k: clean(v) for k, v in self.values.items()})


def _kernel_certificate(T: float, players: int, K: int, seed: int, replies: int) -> CertificateReport:
    from .best_reply import apply_best_reply

    spec = kernel_game(T, players, K)
    nodes, w = spec.ensemble.nodes, spec.ensemble.weights
    # (a) the zero profile: every player has two optimal controls
    out = apply_best_reply(spec.zero_path(), spec)
    pure_gap = 0.0
    for sol in out.solutions:
        costs = [sol.candidates[i].cost for i in sol.optimal]
        ends = sorted(float(sol.candidates[i].terminal[0]) for i in sol.optimal)
        pure_gap = max(pure_gap, abs(max(costs) - min(costs)))
        if len(ends) != 2 or abs(ends[0] + T) > 1e-9 or abs(ends[1] - T) > 1e-9:
            pure_gap = math.inf
    # (b) sign argument: <b, x(T)> is a PSD quadratic form, optimality makes it negative
    gram = gaussian_gram(nodes, w)
    min_eig = float(np.min(np.linalg.eigvalsh(gram)))
    rng = np.random.default_rng(seed)
    signs = [np.ones(players), np.where(np.arange(players) % 2 == 0, 1.0, -1.0)]
    signs += [rng.choice([-1.0, 1.0], players) for _ in range(max(0, replies - 2))]
    kernel = np.exp(-np.subtract.outer(nodes, nodes) ** 2)
    quad_forms, optimal_forms, self_consistent = [], [], []
    for s in signs:
        xT = T * s
        b = kernel @ (w * xT)
        quad_forms.append(float(np.sum(w * b * xT)))
        reply = -T * np.sign(b)
        optimal_forms.append(float(np.sum(w * b * reply)))
        self_consistent.append(bool(np.array_equal(reply, xT)))
    # (c) half/half mixture: mean terminal point 0, so b = 0 and both pure controls tie
    mean_xT = 0.5 * T + 0.5 * (-T)
    b_mix = kernel @ (w * np.full(players, mean_xT))
    cost_plus = -(T - b_mix) ** 2
    cost_minus = -(-T - b_mix) ** 2
    mix_gap = float(np.max(np.abs(cost_plus - cost_minus)))
    b_all = kernel @ (w * np.full(players, T))
    fine = np.linspace(0.0, 1.0, 2001)
    from scipy.special import erf
    b_exact = T * 0.5 * math.sqrt(math.pi) * (erf(1.0 - fine) + erf(fine))
    checks = dict(tie_mass_one=abs(out.tie_mass - 1.0) < 1e-12, pure_costs_equal=pure_gap < 1e-12,
                  gram_psd=min_eig > -1e-12, quadratic_form_nonnegative=all(q >= -1e-12 for q in quad_forms),
                  optimal_reply_negative=all(o < 0 for o in optimal_forms),
                  no_self_consistent_reply=not any(self_consistent),
                  mixture_barycenter_zero=float(np.max(np.abs(b_mix))) == 0.0, mixture_costs_equal=mix_gap < 1e-12,
                  all_at_T_positive=float(b_exact.min()) > 0.7 * T)
    values = dict(tie_mass=out.tie_mass, pure_cost_gap=pure_gap, gram_min_eigenvalue=min_eig,
                  quadratic_forms=quad_forms, optimal_reply_forms=optimal_forms, mixture_cost_gap=mix_gap,
                  min_b_all_at_T=float(b_exact.min()), min_b_all_at_T_quadrature=float(b_all.min()),
                  players=players, T=T)
    return CertificateReport("kernel", checks, values)


def _terminal_constraint_certificate(T: float, K: int, iterations: int) -> CertificateReport:
    t = np.linspace(0.0, T, K + 1)
    zero = terminal_constraint_reply(np.zeros(K + 1), t, T)
    other = terminal_constraint_reply(0.3 * np.sin(t), t, T)
    X = np.zeros(K + 1)
    orbit = []
    for _ in range(iterations):
        r = terminal_constraint_reply(X, t, T)
        orbit.append(dict(terminal=r.terminal, cost=r.cost, sup=float(np.max(np.abs(r.trajectory)))))
        X = r.trajectory
    sups = [o["sup"] for o in orbit]
    two_cycle = all(abs(sups[k] - sups[k + 2]) == 0.0 for k in range(len(sups) - 2)) and sups[0] != sups[1]
    fixed = any(np.max(np.abs(terminal_constraint_reply(c, t, T).trajectory - c)) == 0.0 for c in (np.zeros(K + 1), t))
    # exact analysis: a fixed point would solve x' = B/T - x^2, x(0) = x(T) = 0, forcing B = 0 and x = 0
    exact = []
    X = np.zeros(K + 1)
    for _ in range(iterations):
        r = terminal_constraint_reply(X, t, T, mode="exact")
        exact.append(dict(terminal=r.terminal, cost=r.cost, sup=float(np.nanmax(np.abs(r.trajectory)))))
        X = r.trajectory
        if not np.all(np.isfinite(X)):
            break
    checks = dict(zero_reply_cost=abs(zero.cost + T) < 1e-12 and np.array_equal(zero.trajectory, t),
                  nonzero_reply_is_zero=bool(np.all(other.trajectory == 0.0)) and not other.reachable_T,
                  two_cycle=two_cycle, no_fixed_point=not fixed)
    values = dict(T=T, zero_reply_cost=zero.cost, orbit=orbit, exact_orbit=exact,
                  exact_nonzero_reply_terminal=terminal_constraint_reply(0.3 * np.sin(t), t, T, "exact").terminal)
    return CertificateReport("terminal_constraint", checks, values)


def no_solution_certificates(variant: str, T: float = 1.0, players: int = 20, K: int = 20, seed: int = 0,
                             replies: int = 8, iterations: int = 6) -> CertificateReport:
    """Numerical certificates for the two games without strong solutions."""
    if variant == "kernel":
        return _kernel_certificate(T, players, K, seed, replies)
    if variant == "terminal_constraint":
        return _terminal_constraint_certificate(T, K, iterations)
    raise ValueError("variant must be 'kernel' or 'terminal_constraint'")
