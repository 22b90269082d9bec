"""Structural-stability probes: bump one ingredient of a game by a C^2-small amount and
measure how far the fixed point moves."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .best_reply import BestReplyConfig, apply_best_reply
from .errors import LagMFGError
from .fixed_point import PicardConfig, picard_batch
from .model import ControlAffineDynamics, GameSpec, MomentPath, RunningCost, TerminalCost
from .pmp import eta_samples_of

log = logging.getLogger(__name__)

BUMP_TARGETS = ("psi", "L", "f0", "xbar")


def _bspline(s):
    """Cubic B-spline profile on ``[-2, 2]`` and its first two derivatives (in ``s >= 0``)."""
    s = np.abs(s)
    inner = s <= 1.0
    outer = (s > 1.0) & (s < 2.0)
    v = np.where(inner, 2.0 / 3.0 - s * s + 0.5 * s ** 3, np.where(outer, (2.0 - s) ** 3 / 6.0, 0.0))
    d1 = np.where(inner, -2.0 * s + 1.5 * s * s, np.where(outer, -0.5 * (2.0 - s) ** 2, 0.0))
    d2 = np.where(inner, -2.0 + 3.0 * s, np.where(outer, 2.0 - s, 0.0))
    # d1 / s, finite at the centre
    d1_over_s = np.where(inner, -2.0 + 1.5 * s, np.where(outer, -0.5 * (2.0 - s) ** 2 / np.maximum(s, 1.0), 0.0))
    return v, d1, d2, d1_over_s


@dataclass(frozen=True)
class Bump:
    """Radial C^2 bump ``B(x) = c N(2 |x - center| / radius)`` with ``|B|_{C^2} = 1``.

    The C^2 norm is the max of ``sup |B|``, ``sup |grad B|`` and
    ``sup |hess B|`` (operator norm), so a ``delta``-scaled bump is a
    perturbation of C^2 size exactly ``delta``.
    """

    center: np.ndarray
    radius: float = 1.0
    scale: float = field(init=False, repr=False)

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("bump radius must be positive")
        object.__setattr__(self, "center", np.atleast_1d(np.asarray(self.center, dtype=float)))
        k = 2.0 / self.radius
        v, d1, d2, q = _bspline(np.linspace(0.0, 2.0, 20001))
        norm = max(np.max(np.abs(v)), k * np.max(np.abs(d1)), k * k * max(np.max(np.abs(d2)), np.max(np.abs(q))))
        object.__setattr__(self, "scale", 1.0 / float(norm))

    def _radial(self, x):
        d = np.asarray(x, dtype=float) - self.center
        r = np.sqrt(np.sum(d * d, axis=-1))
        k = 2.0 / self.radius
        return d, r, k, _bspline(k * r)

    def value(self, x):
        _, _, _, (v, _, _, _) = self._radial(x)
        return self.scale * v

    def grad(self, x):
        d, _, k, (_, _, _, q) = self._radial(x)
        # N'(s) ds/dx = N'(s)/s * k^2 d
        return self.scale * (k * k * q)[..., None] * d

    def hess(self, x):
        d, r, k, (_, _, d2, q) = self._radial(x)
        n = d.shape[-1]
        safe = np.where(r > 0, r, 1.0)[..., None]
        e = np.where(r[..., None] > 0, d / safe, 0.0)
        outer = e[..., :, None] * e[..., None, :]
        eye = np.eye(n)
        # along e: k^2 N''; across: N'(s) s_r / r = k^2 N'/s
        H = (k * k) * (d2[..., None, None] * outer + q[..., None, None] * (eye - outer))
        return self.scale * H

    def c2_norm(self, samples: int = 4001) -> float:
        """Sampled C^2 norm along a ray (for checks; should be 1)."""
        n = self.center.size
        ray = np.zeros((samples, n))
        ray[:, 0] = np.linspace(-self.radius, self.radius, samples)
        x = self.center + ray
        return float(max(np.max(np.abs(self.value(x))), np.max(np.linalg.norm(self.grad(x), axis=-1)),
                         np.max(np.linalg.norm(self.hess(x), ord=2, axis=(-2, -1)))))


def perturb_spec(spec: GameSpec, target: str, delta: float, bump: Bump | None = None) -> GameSpec:
    """The game with ``delta * B`` added to psi, L or the first drift component, or ``xbar + delta``."""
    if target not in BUMP_TARGETS:
        raise ValueError(f"bump target must be one of {BUMP_TARGETS}, got {target!r}")
    if delta == 0.0:
        return spec
    params = dict(spec.params, perturbation=dict(target=target, delta=delta))
    if target == "xbar":
        ens = replace(spec.ensemble, initial_points=spec.ensemble.initial_points + delta)
        return replace(spec, ensemble=ens, params=params)
    if bump is None:
        raise ValueError("a bump is required for psi, L and f0 perturbations")
    B = bump
    if target == "psi":
        term = spec.terminal
        new = TerminalCost(value=lambda x, e: term.psi(x, e) + delta * B.value(x),
                           grad=lambda x, e: term.gradient(x, e) + delta * B.grad(x),
                           hess=lambda x, e: term.hessian(x, e) + delta * B.hess(x),
                           positive=False)
        return replace(spec, terminal=new, params=params)
    if target == "L":
        run = spec.running
        new = RunningCost(value=lambda t, x, u, e: run.L(t, x, u, e) + delta * B.value(x),
                          grad_x=lambda t, x, u, e: run.L_x(t, x, u, e) + delta * B.grad(x),
                          grad_u=run.grad_u, hess_uu=run.hess_uu, convexity=run.convexity,
                          coercivity=run.coercivity, quadratic_in_u=run.quadratic_in_u)
        flow = None
        if spec.flow is not None:
            base = spec.flow

            def flow(t, x, p, eta):
                xdot, pdot, L, u = base(t, x, p, eta)
                return xdot, pdot - delta * B.grad(x), L + delta * B.value(x), u

        return replace(spec, running=new, flow=flow, params=params)
    dyn = spec.dynamics
    n = dyn.state_dim
    e0 = np.zeros(n)
    e0[0] = 1.0

    def drift(t, x, e):
        return dyn.drift(t, x, e) + delta * B.value(x)[..., None] * e0

    def drift_x(t, x, e):
        base = dyn.drift_x(t, x, e) if dyn.drift_x is not None else None
        if base is None:
            from .model import central_difference
            base = central_difference(lambda z: dyn.drift(t, z, e), x)
        return base + delta * e0[:, None] * B.grad(x)[..., None, :]

    new = ControlAffineDynamics(n, dyn.control_dim, drift, dyn.fields, drift_x, dyn.fields_x,
                                dyn.u_lo, dyn.u_hi, dyn.growth_c1)
    flow = None
    if spec.flow is not None:
        base_flow = spec.flow

        def flow(t, x, p, eta):
            xdot, pdot, L, u = base_flow(t, x, p, eta)
            b = B.value(x)
            return xdot + delta * b[..., None] * e0, pdot - delta * p[..., :1] * B.grad(x), L, u

    return replace(spec, dynamics=new, flow=flow, params=params)


def player_distance(spec: GameSpec, a: np.ndarray, b: np.ndarray) -> float:
    """``sup_t sum_j w_j |x_a(t, j) - x_b(t, j)|`` for state arrays ``(P, K+1, n)``."""
    gap = np.linalg.norm(a - b, axis=-1)
    return float(np.max(spec.ensemble.weights @ gap))


@dataclass
class StructuralProbeReport:
    """Distances of perturbed fixed points to the baseline, per ``delta``."""

    target: str
    bump: dict
    deltas: list
    distances: list
    moment_distances: list
    outcomes: list
    iterations: list
    slope: float | None
    reference_exponent: float = 2.0 / 3.0
    meta: dict = field(default_factory=dict)

    @property
    def all_converged(self) -> bool:
        return all(o == "converged" for o in self.outcomes)

    @property
    def decreasing(self) -> bool:
        pairs = sorted(zip(self.deltas, self.distances), reverse=True)
        return all(pairs[i + 1][1] < pairs[i][1] for i in range(len(pairs) - 1))

    def to_dict(self) -> dict:
        return dict(target=self.target, bump=self.bump, deltas=self.deltas, distances=self.distances,
                    moment_distances=self.moment_distances, outcomes=self.outcomes, iterations=self.iterations,
                    slope=self.slope, reference_exponent=self.reference_exponent, **self.meta)


def fit_slope(deltas, distances) -> float | None:
    """Least-squares slope of ``log distance`` against ``log delta`` (positive entries only)."""
    pts = [(math.log(d), math.log(r)) for d, r in zip(deltas, distances) if d > 0 and r > 0]
    if len(pts) < 2:
        return None
    x, y = np.array(pts).T
    return float(np.polyfit(x, y, 1)[0])


def probe_structural_stability(spec: GameSpec, baseline, deltas, target: str = "psi", radius: float = 1.0,
                               center=None, picard: PicardConfig | None = None,
                               best_reply: BestReplyConfig | None = None) -> StructuralProbeReport:
    """Re-solve the fixed point for each bumped game, warm-started at ``baseline``.

    Divergent or capped runs are recorded in ``outcomes`` and keep the distance
    of their last iterate.
    """
    br = best_reply or BestReplyConfig()
    pc = picard or PicardConfig(tol=1e-10, max_iter=2000, adaptive=False, keep_history=False, best_reply=br)
    pc = replace(pc, best_reply=br, keep_history=False)
    star = eta_samples_of(baseline, spec.grid, spec.kernels.count)
    base_out = apply_best_reply(MomentPath(spec.grid, star), spec, br)
    base_states = base_out.selected_states()
    if center is None:
        # put the terminal point where the profile is steepest (|x - c| = radius / 3);
        # a bump centred on it has zero gradient there and leaves the extremal intact
        center = base_states[0, -1].copy()
        center[0] -= radius / 3.0
    bump = Bump(np.asarray(center, dtype=float), radius)
    deltas = [float(d) for d in deltas]
    if any(d < 0 for d in deltas):
        raise ValueError("deltas must be nonnegative")
    dists, mdists, outcomes, iters = [], [], [], []
    for d in deltas:
        if d == 0.0:
            dists.append(0.0)
            mdists.append(0.0)
            outcomes.append("converged")
            iters.append(0)
            continue
        pspec = perturb_spec(spec, target, d, bump)
        try:
            run = picard_batch(star[None], pspec, pc, gamma0=math.inf)[0]
        except LagMFGError as err:
            log.warning("structural probe delta=%g failed: %s", d, err)
            dists.append(float("nan"))
            mdists.append(float("nan"))
            outcomes.append("error")
            iters.append(0)
            continue
        out = apply_best_reply(run.eta_star, pspec, br)
        dists.append(player_distance(spec, out.selected_states(), base_states))
        mdists.append(float(np.max(np.abs(run.eta_star.values - star))))
        outcomes.append(run.outcome)
        iters.append(run.iterations)
    slope = fit_slope(deltas, dists)
    desc = dict(target=target, radius=radius, center=np.atleast_1d(center).tolist(), c2_norm=1.0)
    return StructuralProbeReport(target, desc, deltas, dists, mdists, outcomes, iters, slope)
