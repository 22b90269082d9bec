"""Problem-definition types for first-order mean field games in Lagrangian form.

All callbacks are vectorized: state/control/moment arguments carry arbitrary
leading batch axes (``x.shape == (..., n)``), time ``t`` is a Python float, and
outputs keep the batch axes.  Moment vectors ``eta`` broadcast against the
state batch, so a single ``(N,)`` moment vector may be shared by every batch
member or a ``(B, N)`` array may give one moment vector per member.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .errors import DomainError

FD_REL_STEP = 1e-6
DERIVATIVE_TOL = 1e-4

Array = np.ndarray


def central_difference(fun: Callable[[Array], Array], z: Array) -> Array:
    """Central finite differences of ``fun`` w.r.t. the last axis of ``z``.

    ``fun(z)`` returns shape ``(...)`` or ``(..., k)``; the result has shape
    ``(..., n)`` or ``(..., k, n)``.  Step is ``1e-6 * (1 + |z_j|)``.
    """
    z = np.asarray(z, dtype=float)
    n = z.shape[-1]
    h = FD_REL_STEP * (1.0 + np.abs(z))
    cols = []
    for j in range(n):
        dz = np.zeros_like(z)
        dz[..., j] = h[..., j]
        diff = np.asarray(fun(z + dz)) - np.asarray(fun(z - dz))
        hj = 2.0 * h[..., j]
        hj = hj.reshape(hj.shape + (1,) * (diff.ndim - hj.ndim))
        cols.append(diff / hj)
    return np.stack(cols, axis=-1)


def _as_bound(b, m: int) -> Array | None:
    if b is None:
        return None
    arr = np.broadcast_to(np.asarray(b, dtype=float), (m,)).copy()
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ControlAffineDynamics:
    """Dynamics ``f(t, x, u, eta) = drift(t, x, eta) + fields(t, x, eta) @ u``.

    ``fields`` returns the ``(..., n, m)`` matrix whose columns are the control
    vector fields.  ``drift_x`` returns ``(..., n, n)``; ``fields_x`` returns
    ``(..., n, m, n)`` with the last axis the state derivative.  Missing
    partials fall back to central differences.
    """

    state_dim: int
    control_dim: int
    drift: Callable
    fields: Callable
    drift_x: Callable | None = None
    fields_x: Callable | None = None
    u_lo: Array | None = None
    u_hi: Array | None = None
    growth_c1: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "u_lo", _as_bound(self.u_lo, self.control_dim))
        object.__setattr__(self, "u_hi", _as_bound(self.u_hi, self.control_dim))
        if self.u_lo is not None and self.u_hi is not None and np.any(self.u_lo > self.u_hi):
            raise ValueError("control lower bound exceeds upper bound")

    @property
    def bounded(self) -> bool:
        return self.u_lo is not None or self.u_hi is not None

    def lower(self) -> Array:
        return self.u_lo if self.u_lo is not None else np.full(self.control_dim, -np.inf)

    def upper(self) -> Array:
        return self.u_hi if self.u_hi is not None else np.full(self.control_dim, np.inf)

    def f(self, t, x, u, eta) -> Array:
        G = self.fields(t, x, eta)
        return self.drift(t, x, eta) + (G @ u[..., None])[..., 0]

    def f_x(self, t, x, u, eta) -> Array:
        if self.drift_x is not None and self.fields_x is not None:
            Gx = self.fields_x(t, x, eta)
            return self.drift_x(t, x, eta) + np.einsum("...imk,...m->...ik", Gx, u)
        return central_difference(lambda z: self.f(t, z, u, eta), x)

    def grad_x_pf(self, t, x, u, eta, p) -> Array:
        """Gradient in ``x`` of the scalar ``p . f(t, x, u, eta)``."""
        if self.drift_x is not None and self.fields_x is not None:
            return (p[..., None, :] @ self.f_x(t, x, u, eta))[..., 0, :]
        return central_difference(lambda z: np.sum(p * self.f(t, z, u, eta), axis=-1), x)


@dataclass(frozen=True)
class RunningCost:
    """Running cost ``L(t, x, u, eta)`` with optional analytic partials.

    ``convexity`` is the declared modulus: ``L_uu >= convexity * I``.
    ``quadratic_in_u`` declares that ``L_uu`` does not depend on ``u``, which lets
    the pointwise minimizer stop after a single Newton step.
    """

    value: Callable
    grad_x: Callable | None = None
    grad_u: Callable | None = None
    hess_uu: Callable | None = None
    convexity: float = 1e-6
    coercivity: float | None = None
    quadratic_in_u: bool = False

    def L(self, t, x, u, eta) -> Array:
        return self.value(t, x, u, eta)

    def L_x(self, t, x, u, eta) -> Array:
        if self.grad_x is not None:
            return self.grad_x(t, x, u, eta)
        return central_difference(lambda z: self.value(t, z, u, eta), x)

    def L_u(self, t, x, u, eta) -> Array:
        if self.grad_u is not None:
            return self.grad_u(t, x, u, eta)
        return central_difference(lambda w: self.value(t, x, w, eta), u)

    def L_uu(self, t, x, u, eta) -> Array:
        if self.hess_uu is not None:
            return self.hess_uu(t, x, u, eta)
        H = central_difference(lambda w: self.L_u(t, x, w, eta), u)
        return 0.5 * (H + np.swapaxes(H, -1, -2))


@dataclass(frozen=True)
class TerminalCost:
    """Terminal cost ``psi(x, eta_T)``; ``eta_T`` is the moment vector at the horizon.

    Most games ignore ``eta_T``; the rotation-map games need it.
    """

    value: Callable
    grad: Callable | None = None
    hess: Callable | None = None
    positive: bool = False

    def psi(self, x, eta_T) -> Array:
        return self.value(x, eta_T)

    def gradient(self, x, eta_T) -> Array:
        if self.grad is not None:
            return self.grad(x, eta_T)
        return central_difference(lambda z: self.value(z, eta_T), x)

    def hessian(self, x, eta_T) -> Array:
        if self.hess is not None:
            return self.hess(x, eta_T)
        H = central_difference(lambda z: self.gradient(z, eta_T), x)
        return 0.5 * (H + np.swapaxes(H, -1, -2))


@dataclass(frozen=True)
class MomentKernelSet:
    """``count`` moment kernels stacked: ``value(t, x) -> (..., N)``, ``grad -> (..., N, n)``."""

    count: int
    value: Callable
    grad: Callable | None = None

    def phi(self, t, x) -> Array:
        return self.value(t, x)

    def phi_x(self, t, x) -> Array:
        if self.grad is not None:
            return self.grad(t, x)
        return central_difference(lambda z: self.value(t, z), x)


def barycenter_kernels(n: int) -> MomentKernelSet:
    """The identity kernel ``phi(t, x) = x`` (moments are the barycenter)."""
    eye = np.eye(n)
    return MomentKernelSet(
        count=n,
        value=lambda t, x: np.array(x, dtype=float, copy=True),
        grad=lambda t, x: np.broadcast_to(eye, np.shape(x)[:-1] + (n, n)),
    )


@dataclass(frozen=True)
class PlayerEnsemble:
    """Quadrature over player labels: nodes in [0, 1], positive weights summing to 1."""

    nodes: Array
    weights: Array
    initial_points: Array
    support_radius: float | None = None

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float).reshape(-1)
        weights = np.asarray(self.weights, dtype=float).reshape(-1)
        pts = np.asarray(self.initial_points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if not (len(nodes) == len(weights) == len(pts)):
            raise ValueError("ensemble nodes, weights and initial points differ in length")
        if np.any(weights <= 0):
            raise ValueError("ensemble weights must be positive")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError(f"ensemble weights sum to {weights.sum()!r}, not 1")
        if np.any((nodes < 0) | (nodes > 1)):
            raise ValueError("ensemble nodes must lie in [0, 1]")
        if self.support_radius is not None:
            if np.any(np.linalg.norm(pts, axis=1) > self.support_radius + 1e-12):
                raise ValueError("initial point outside the declared support ball")
        for name, arr in (("nodes", nodes), ("weights", weights), ("initial_points", pts)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def midpoint(cls, initial_point: Callable[[float], Array] | Array, count: int = 1,
                 state_dim: int | None = None, support_radius: float | None = None):
        """Midpoint rule on [0, 1]; ``initial_point`` is a map xi -> x or a constant."""
        nodes = (np.arange(count) + 0.5) / count
        weights = np.full(count, 1.0 / count)
        if callable(initial_point):
            pts = np.array([np.atleast_1d(initial_point(xi)) for xi in nodes], dtype=float)
        else:
            base = np.atleast_1d(np.asarray(initial_point, dtype=float))
            if state_dim is not None and base.size == 1:
                base = np.full(state_dim, base.item())
            pts = np.tile(base, (count, 1))
        return cls(nodes, weights, pts, support_radius)

    @property
    def size(self) -> int:
        return len(self.nodes)

    @property
    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.initial_points)))


@dataclass(frozen=True)
class TimeGrid:
    horizon: float
    steps: int

    def __post_init__(self):
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if int(self.steps) != self.steps or self.steps < 2:
            raise ValueError("time grid needs at least 2 steps")

    @property
    def dt(self) -> float:
        return self.horizon / self.steps

    @property
    def nodes(self) -> Array:
        return np.arange(self.steps + 1) * self.dt


def interpolate_samples(samples: Array, grid: TimeGrid, t: float) -> Array:
    """Piecewise-linear value at ``t`` of samples shaped ``(..., K+1, N)``."""
    K = grid.steps
    s = t / grid.dt
    k = min(max(int(math.floor(s)), 0), K - 1)
    w = s - k
    if w == 0.0:
        return samples[..., k, :]
    if w == 1.0:
        return samples[..., k + 1, :]
    return (1.0 - w) * samples[..., k, :] + w * samples[..., k + 1, :]


@dataclass(frozen=True)
class MomentPath:
    """Moment path sampled on a time grid, piecewise linear in between."""

    grid: TimeGrid
    values: Array

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        if vals.shape[0] != self.grid.steps + 1:
            raise ValueError(f"expected {self.grid.steps + 1} samples, got {vals.shape[0]}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def constant(cls, grid: TimeGrid, value) -> "MomentPath":
        v = np.atleast_1d(np.asarray(value, dtype=float))
        return cls(grid, np.tile(v, (grid.steps + 1, 1)))

    @classmethod
    def from_function(cls, grid: TimeGrid, fn: Callable[[float], Array]) -> "MomentPath":
        return cls(grid, np.array([np.atleast_1d(fn(t)) for t in grid.nodes], dtype=float))

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def interpolate(self, t: float) -> Array:
        if not (0.0 <= t <= self.grid.horizon):
            raise DomainError(f"t={t} outside [0, {self.grid.horizon}]")
        return interpolate_samples(self.values, self.grid, t)

    def sup_norm(self) -> float:
        return float(np.max(np.linalg.norm(self.values, axis=1)))

    def c3_seminorm(self) -> float:
        """Max abs third divided difference (diagnostic stand-in for the C^3 norm)."""
        if self.grid.steps < 3:
            return 0.0
        d3 = np.diff(self.values, n=3, axis=0) / self.grid.dt ** 3
        return float(np.max(np.abs(d3)))

    def distance(self, other: "MomentPath") -> float:
        return float(np.max(np.abs(self.values - other.values)))


def interpolate_moment(path: MomentPath, t: float) -> Array:
    return path.interpolate(t)


@dataclass(frozen=True)
class ControlProblem:
    """A single player's optimal control problem (moments supplied separately).

    ``flow(t, x, p, eta) -> (xdot, pdot, L, u)`` optionally supplies the reduced
    Hamiltonian flow in closed form (the pointwise minimizer substituted); the
    solvers then skip the generic Newton minimization.
    """

    dynamics: ControlAffineDynamics
    running: RunningCost
    terminal: TerminalCost
    grid: TimeGrid
    flow: Callable | None = None

    @property
    def n(self) -> int:
        return self.dynamics.state_dim

    @property
    def m(self) -> int:
        return self.dynamics.control_dim


@dataclass(frozen=True)
class GameSpec:
    """The five-tuple (f, L, psi, phi, xbar) plus the time grid.

    ``reach_radius`` is the declared a priori radius of optimal trajectories
    (beta_0); ``control_radius`` the declared control bound (alpha_0).  ``flow``
    is forwarded to :class:`ControlProblem`.
    """

    dynamics: ControlAffineDynamics
    running: RunningCost
    terminal: TerminalCost
    kernels: MomentKernelSet
    ensemble: PlayerEnsemble
    grid: TimeGrid
    reach_radius: float | None = None
    control_radius: float | None = None
    name: str = "game"
    params: dict = field(default_factory=dict)
    flow: Callable | None = None

    def __post_init__(self):
        n, m, N = self.dynamics.state_dim, self.dynamics.control_dim, self.kernels.count
        if N < 1:
            raise ValueError("at least one moment kernel is required")
        if self.ensemble.initial_points.shape[1] != n:
            raise ValueError(
                f"initial points have dimension {self.ensemble.initial_points.shape[1]}, state_dim is {n}")
        x = self.ensemble.initial_points[0]
        u = np.zeros(m)
        eta = np.zeros(N)
        checks = [
            ("drift", self.dynamics.drift(0.0, x, eta), (n,)),
            ("fields", self.dynamics.fields(0.0, x, eta), (n, m)),
            ("running cost", self.running.L(0.0, x, u, eta), ()),
            ("terminal cost", self.terminal.psi(x, eta), ()),
            ("moment kernels", self.kernels.phi(0.0, x), (N,)),
        ]
        for label, out, want in checks:
            if np.shape(out) != want:
                raise ValueError(f"{label} returned shape {np.shape(out)}, expected {want}")

    @property
    def problem(self) -> ControlProblem:
        return ControlProblem(self.dynamics, self.running, self.terminal, self.grid, self.flow)

    def with_grid(self, grid: TimeGrid) -> "GameSpec":
        return replace(self, grid=grid, params=dict(self.params))

    def zero_path(self) -> MomentPath:
        return MomentPath.constant(self.grid, np.zeros(self.kernels.count))


def _ball_points(n: int, radius: float, step: float | None = None) -> Array:
    """Deterministic sample of the closed ball: an axis grid plus boundary points."""
    if n == 1:
        if radius == 0:
            return np.zeros((1, 1))
        step = step or 1e-3 * radius
        cnt = int(math.ceil(2 * radius / step)) + 1
        return np.linspace(-radius, radius, cnt)[:, None]
    per_axis = 201 if n == 2 else 11
    axis = np.linspace(-radius, radius, per_axis)
    mesh = np.stack(np.meshgrid(*([axis] * n), indexing="ij"), axis=-1).reshape(-1, n)
    inside = mesh[np.linalg.norm(mesh, axis=1) <= radius * (1 + 1e-12)]
    rng = np.random.default_rng(0)
    d = rng.standard_normal((2000 if n > 2 else 0, n))
    if n == 2:
        ang = np.linspace(0, 2 * np.pi, 3600, endpoint=False)
        d = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return np.vstack([inside, radius * d, -radius * np.eye(n), radius * np.eye(n)])


def lemma_reach_radius(spec: GameSpec, c1: float, c2: float) -> float:
    """Explicit a priori trajectory radius from the growth/coercivity constants.

    Returns ``inf`` when the bound overflows (it is exponential in the data).
    """
    T = spec.grid.horizon
    m = spec.dynamics.control_dim
    r = spec.ensemble.sup_norm
    r0 = (r + 1.0) * math.exp(c1 * T) - 1.0
    pts = _ball_points(spec.dynamics.state_dim, r0, step=r0 / 400 if r0 > 0 else None)
    eta = np.zeros(spec.kernels.count)
    u0 = np.zeros(pts.shape[:-1] + (m,))
    sup_L = max(float(np.max(spec.running.L(t, pts, u0, eta))) for t in (0.0, 0.5 * T, T))
    sup_psi = float(np.max(np.abs(spec.terminal.psi(pts, eta))))
    beta1 = (T * sup_L + sup_psi) / c2 + T
    expo = 0.5 * c1 * (beta1 + (m + 2) * T)
    if expo > 700:
        return math.inf
    return (r + 1.0) * math.exp(expo) - 1.0


def reachable_radius(spec: GameSpec, safety: float = 2.0) -> float:
    """beta_0: declared value, else the explicit bound, else a u=0 forward simulation."""
    if spec.reach_radius is not None:
        return float(spec.reach_radius)
    c1 = spec.dynamics.growth_c1
    c2 = spec.running.coercivity
    if c1 is not None and c2 is not None:
        beta = lemma_reach_radius(spec, c1, c2)
        if math.isfinite(beta):
            return beta
    grid = spec.grid
    x = spec.ensemble.initial_points.astype(float)
    u = np.zeros(x.shape[:-1] + (spec.dynamics.control_dim,))
    eta = np.zeros(spec.kernels.count)
    f = spec.dynamics.f
    h = grid.dt
    sup = float(np.max(np.abs(x)))
    for k in range(grid.steps):
        t = k * h
        k1 = f(t, x, u, eta)
        k2 = f(t + h / 2, x + h / 2 * k1, u, eta)
        k3 = f(t + h / 2, x + h / 2 * k2, u, eta)
        k4 = f(t + h, x + h * k3, u, eta)
        x = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        sup = max(sup, float(np.max(np.linalg.norm(x, axis=-1))))
    return safety * max(sup, 1.0)


def moment_bound(spec: GameSpec, step: float = 1e-3, time_samples: int | None = None) -> float:
    """gamma_0 = sqrt(sum_i max_{t, |x| <= beta_0} |phi_i(t, x)|^2) by grid maximization."""
    beta0 = reachable_radius(spec)
    pts = _ball_points(spec.dynamics.state_dim, beta0, step=step)
    ts = spec.grid.nodes if time_samples is None else np.linspace(0, spec.grid.horizon, time_samples)
    best = np.zeros(spec.kernels.count)
    for t in ts:
        vals = np.abs(np.asarray(spec.kernels.phi(float(t), pts)))
        best = np.maximum(best, vals.max(axis=0))
    return float(np.sqrt(np.sum(best ** 2)))


@dataclass
class ValidationReport:
    """Outcome of :func:`check_derivatives`."""

    tolerance: float
    probes: int
    errors: dict = field(default_factory=dict)
    violations: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    properties: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return not self.violations and not self.failures

    def to_dict(self) -> dict:
        return {
            "tolerance": self.tolerance,
            "probes": self.probes,
            "errors": dict(self.errors),
            "violations": list(self.violations),
            "failures": list(self.failures),
            "properties": dict(self.properties),
            "passed": self.passed,
        }


def _rel_err(supplied, reference) -> float:
    supplied = np.asarray(supplied, dtype=float)
    reference = np.asarray(reference, dtype=float)
    scale = 1.0 + np.max(np.abs(reference)) if reference.size else 1.0
    return float(np.max(np.abs(supplied - reference)) / scale) if reference.size else 0.0


def check_derivatives(model: GameSpec, probes: int = 100, seed: int = 0,
                      tol: float = DERIVATIVE_TOL) -> ValidationReport:
    """Compare every supplied partial derivative with central differences on random probes."""
    if probes < 1:
        raise ValueError("probes must be >= 1")
    dyn, run, term, ker = model.dynamics, model.running, model.terminal, model.kernels
    n, m, N = dyn.state_dim, dyn.control_dim, ker.count
    T = model.grid.horizon
    radius = reachable_radius(model)
    if not math.isfinite(radius):
        radius = 10.0
    u_scale = model.control_radius if model.control_radius is not None else 2.0
    rng = np.random.default_rng(seed)
    report = ValidationReport(tolerance=tol, probes=probes)

    checks: list[tuple[str, Callable, Callable]] = []
    if dyn.drift_x is not None:
        checks.append(("drift_x", lambda t, x, u, e: dyn.drift_x(t, x, e),
                       lambda t, x, u, e: central_difference(lambda z: dyn.drift(t, z, e), x)))
    if dyn.fields_x is not None:
        checks.append(("fields_x", lambda t, x, u, e: dyn.fields_x(t, x, e),
                       lambda t, x, u, e: central_difference(lambda z: dyn.fields(t, z, e), x)))
    if run.grad_x is not None:
        checks.append(("L_x", run.grad_x, lambda t, x, u, e: central_difference(lambda z: run.L(t, z, u, e), x)))
    if run.grad_u is not None:
        checks.append(("L_u", run.grad_u, lambda t, x, u, e: central_difference(lambda w: run.L(t, x, w, e), u)))
    if run.hess_uu is not None:
        checks.append(("L_uu", run.hess_uu,
                       lambda t, x, u, e: central_difference(lambda w: run.L_u(t, x, w, e), u)))
    if term.grad is not None:
        checks.append(("psi_grad", lambda t, x, u, e: term.grad(x, e),
                       lambda t, x, u, e: central_difference(lambda z: term.psi(z, e), x)))
    if term.hess is not None:
        checks.append(("psi_hess", lambda t, x, u, e: term.hess(x, e),
                       lambda t, x, u, e: central_difference(lambda z: term.gradient(z, e), x)))
    if ker.grad is not None:
        checks.append(("phi_x", lambda t, x, u, e: ker.grad(t, x),
                       lambda t, x, u, e: central_difference(lambda z: ker.phi(t, z), x)))

    min_eig = math.inf
    growth_ok = True
    coercive_ok = True
    for name, _, _ in checks:
        report.errors[name] = 0.0
    for i in range(probes):
        t = float(rng.uniform(0.0, T))
        d = rng.standard_normal(n)
        x = d / max(np.linalg.norm(d), 1e-300) * radius * rng.uniform() ** (1.0 / n)
        u = rng.uniform(-u_scale, u_scale, m)
        if dyn.bounded:
            u = np.clip(u, dyn.lower(), dyn.upper())
        e = rng.uniform(-1.0, 1.0, N) * max(1.0, radius)
        for name, supplied, reference in checks:
            try:
                with np.errstate(all="ignore"):
                    a = np.asarray(supplied(t, x, u, e), dtype=float)
                    b = np.asarray(reference(t, x, u, e), dtype=float)
            except (FloatingPointError, ZeroDivisionError, OverflowError) as exc:
                report.failures.append(f"{name}: evaluation error at probe {i}: {exc}")
                continue
            if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
                report.failures.append(f"{name}: non-finite evaluation at probe {i}")
                continue
            if a.shape != b.shape:
                report.failures.append(f"{name}: shape {a.shape} != {b.shape}")
                continue
            report.errors[name] = max(report.errors[name], _rel_err(a, b))
        Luu = np.atleast_2d(run.L_uu(t, x, u, e))
        if np.all(np.isfinite(Luu)):
            min_eig = min(min_eig, float(np.min(np.linalg.eigvalsh(0.5 * (Luu + Luu.T)))))
        if dyn.growth_c1 is not None:
            G = np.atleast_2d(dyn.fields(t, x, e))
            f0 = dyn.drift(t, x, e)
            bound = dyn.growth_c1 * (np.linalg.norm(x) + 1.0)
            if np.linalg.norm(f0) > bound + 1e-12 or np.any(np.linalg.norm(G, axis=0) > bound + 1e-12):
                growth_ok = False
        if run.coercivity is not None:
            if run.L(t, x, u, e) < run.coercivity * (float(u @ u) - 1.0) - 1e-12:
                coercive_ok = False

    for name, err in report.errors.items():
        if err > tol:
            report.violations.append(f"{name}: max relative error {err:.3e} exceeds {tol:.1e}")
    report.properties["min_eig_L_uu"] = min_eig
    report.properties["convexity_ok"] = bool(min_eig >= run.convexity - 1e-9)
    if not report.properties["convexity_ok"]:
        report.violations.append(f"L_uu smallest eigenvalue {min_eig:.3e} below declared {run.convexity:.3e}")
    if dyn.growth_c1 is not None:
        report.properties["growth_ok"] = growth_ok
        if not growth_ok:
            report.violations.append("sublinear growth bound violated on probes")
    if run.coercivity is not None:
        report.properties["coercivity_ok"] = coercive_ok
        if not coercive_ok:
            report.violations.append("coercivity bound violated on probes")
    return report
