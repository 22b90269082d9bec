"""Pontryagin shooting for a single player's optimal control problem.

The PMP system is integrated backward from terminal data ``x(T) = y``,
``p(T) = grad psi(y)`` with fixed-step RK4, and the terminal point ``y`` is
found by Newton iteration on ``x(0; y) = xbar``.  Everything is batched: a
call integrates many terminal points (seeds, players, perturbed moment paths)
at once.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.stats import qmc

from .errors import DivergenceError, NoCandidateError, SolverError
from .model import ControlAffineDynamics, ControlProblem, MomentPath, RunningCost, TimeGrid

log = logging.getLogger(__name__)

CONVERGED, DEGENERATE, DIVERGED, STALLED, MAX_ITER = 0, 1, 2, 3, 4
STATUS_NAMES = {CONVERGED: "converged", DEGENERATE: "degenerate", DIVERGED: "diverged",
                STALLED: "stalled", MAX_ITER: "max_iter"}


@dataclass(frozen=True)
class PMPTrajectory:
    """Sampled solution of the PMP system on a time grid."""

    grid: TimeGrid
    states: np.ndarray
    adjoints: np.ndarray
    controls: np.ndarray
    cost: float
    running_cost: float = float("nan")

    @property
    def terminal(self) -> np.ndarray:
        return self.states[-1]

    @property
    def initial(self) -> np.ndarray:
        return self.states[0]


@dataclass(frozen=True)
class ShootingConfig:
    """Newton shooting settings.

    ``box_radius`` sets the multi-start box ``[-R, R]^n``; ``None`` lets the caller
    (or a fallback of ``2 (1 + |xbar|)``) choose it.
    """

    box_radius: float | None = None
    grid_points: int = 9
    tol: float = 1e-10
    max_iter: int = 50
    fd_step: float = 1e-6
    det_floor: float = 1e-8
    dedup_tol: float = 1e-6
    polish_steps: int = 1
    include_forward_seed: bool = True
    warm_start_only: bool = True
    tie_tol: float = 1e-7
    separation: float = 1e-3
    blowup: float = 1e8
    line_search_halvings: int = 12

    def __post_init__(self):
        for name in ("tol", "fd_step", "det_floor", "dedup_tol", "tie_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_iter < 1 or self.grid_points < 1:
            raise ValueError("max_iter and grid_points must be >= 1")


# ---------------------------------------------------------------------------
# pointwise Hamiltonian minimization


def _solve_small(H: np.ndarray, g: np.ndarray) -> np.ndarray:
    if H.shape[-1] == 1:
        return g / H[..., 0, :]
    return np.linalg.solve(H, g[..., None])[..., 0]


def _control_batch(t, x, p, eta, dyn: ControlAffineDynamics, run: RunningCost, G, guess,
                   max_iter: int = 50):
    """Minimize ``L(x, w, eta) + p.G w`` over w; returns (u, converged mask)."""
    Gtp = (p[..., None, :] @ G)[..., 0, :]
    batch = Gtp.shape[:-1]
    m = dyn.control_dim
    if guess is None:
        u = np.zeros(batch + (m,))
    else:
        u = np.array(np.broadcast_to(guess, batch + (m,)), dtype=float)
    if not dyn.bounded:
        for _ in range(max_iter):
            g = run.L_u(t, x, u, eta) + Gtp
            step = _solve_small(run.L_uu(t, x, u, eta), g)
            u = u - step
            if run.quadratic_in_u:
                return u, np.ones(batch, dtype=bool)
            if np.max(np.abs(step), initial=0.0) <= 1e-13 * (1.0 + np.max(np.abs(u), initial=0.0)):
                break
        g = run.L_u(t, x, u, eta) + Gtp
        return u, np.max(np.abs(g), axis=-1, initial=0.0) <= 1e-10 * (1.0 + np.abs(Gtp).max(axis=-1, initial=0.0))

    lo, hi = dyn.lower(), dyn.upper()
    u = np.clip(u, lo, hi)

    def obj(w):
        return run.L(t, x, w, eta) + np.sum(Gtp * w, axis=-1)

    done = np.zeros(batch, dtype=bool)
    for it in range(max_iter):
        g = run.L_u(t, x, u, eta) + Gtp
        H = run.L_uu(t, x, u, eta)
        active = ((u <= lo) & (g > 0)) | ((u >= hi) & (g < 0))
        free = ~active
        gf = np.where(active, 0.0, g)
        Hf = H * free[..., :, None] * free[..., None, :] + active[..., None, :] * np.eye(m)
        d = _solve_small(Hf, gf)
        cand = np.clip(u - d, lo, hi)
        if not run.quadratic_in_u:
            f0 = obj(u)
            alpha = np.ones(batch)
            for _ in range(30):
                worse = obj(cand) > f0 + 1e-14 * (1.0 + np.abs(f0))
                if not np.any(worse):
                    break
                alpha = np.where(worse, 0.5 * alpha, alpha)
                cand = np.clip(u - alpha[..., None] * d, lo, hi)
        delta = np.max(np.abs(cand - u), axis=-1, initial=0.0)
        u = cand
        done = delta <= 1e-13 * (1.0 + np.max(np.abs(u), axis=-1, initial=0.0))
        if np.all(done):
            break
    res = kkt_residual(t, x, p, eta, u, dyn, run)
    return u, res <= 1e-10 * (1.0 + np.abs(Gtp).max(axis=-1, initial=0.0))


def kkt_residual(t, x, p, eta, u, dyn: ControlAffineDynamics, run: RunningCost) -> np.ndarray:
    """Stationarity residual of the pointwise minimization (sign conditions at active bounds)."""
    G = dyn.fields(t, x, eta)
    g = run.L_u(t, x, u, eta) + (p[..., None, :] @ G)[..., 0, :]
    if not dyn.bounded:
        return np.max(np.abs(g), axis=-1, initial=0.0)
    lo, hi = dyn.lower(), dyn.upper()
    at_lo = u <= lo
    at_hi = u >= hi
    r = np.where(at_lo, np.maximum(-g, 0.0), np.where(at_hi, np.maximum(g, 0.0), np.abs(g)))
    return np.max(r, axis=-1, initial=0.0)


def pointwise_control(t: float, x, p, eta_t, dynamics: ControlAffineDynamics, running: RunningCost,
                      guess=None, max_iter: int = 50) -> np.ndarray:
    """Unique minimizer of ``w -> L(t, x, w, eta) + p . f(t, x, w, eta)``.

    Raises :class:`SolverError` carrying the last stationarity residual when the
    Newton (or projected Newton) iteration does not converge.
    """
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    eta_t = np.asarray(eta_t, dtype=float)
    G = dynamics.fields(t, x, eta_t)
    u, ok = _control_batch(t, x, p, eta_t, dynamics, running, G, guess, max_iter)
    if not np.all(ok):
        res = float(np.max(kkt_residual(t, x, p, eta_t, u, dynamics, running)))
        raise SolverError(f"pointwise minimization did not converge in {max_iter} iterations "
                          f"(residual {res:.3e})", residual=res)
    return u


# ---------------------------------------------------------------------------
# backward RK4 sweep


def eta_samples_of(eta, grid: TimeGrid, count: int | None = None) -> np.ndarray:
    """Accept a MomentPath, an array of samples, or None (zeros with ``count`` moments)."""
    if eta is None:
        return np.zeros((grid.steps + 1, count or 1))
    if isinstance(eta, MomentPath):
        return eta.values
    arr = np.asarray(eta, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.shape[-2] != grid.steps + 1:
        raise ValueError("moment samples do not match the time grid")
    return arr


def _subset_eta(eta_samples: np.ndarray, idx) -> np.ndarray:
    return eta_samples if eta_samples.ndim == 2 else eta_samples[idx]


@dataclass
class Sweep:
    """Raw batched output of a backward sweep; arrays are (K+1, B, ...)."""

    states: np.ndarray
    adjoints: np.ndarray
    controls: np.ndarray
    running_cost: np.ndarray
    ok: np.ndarray
    fail_time: np.ndarray


def _rhs(problem: ControlProblem, t, x, p, eta, guess):
    if problem.flow is not None:
        xdot, pdot, cdot, u = problem.flow(t, x, p, eta)
        return xdot, pdot, cdot, u, True
    dyn, run = problem.dynamics, problem.running
    G = dyn.fields(t, x, eta)
    u, ok = _control_batch(t, x, p, eta, dyn, run, G, guess)
    xdot = dyn.drift(t, x, eta) + (G @ u[..., None])[..., 0]
    pdot = -(dyn.grad_x_pf(t, x, u, eta, p) + run.L_x(t, x, u, eta))
    cdot = run.L(t, x, u, eta)
    return xdot, pdot, cdot, u, ok


def backward_sweep(problem: ControlProblem, y, eta_samples, p_terminal=None,
                   blowup: float = 1e8, record: bool = True) -> Sweep:
    """RK4 integration of the PMP system from ``t = T`` down to 0 for a batch of terminal points."""
    grid = problem.grid
    K, h = grid.steps, grid.dt
    y = np.atleast_2d(np.asarray(y, dtype=float))
    B, n = y.shape
    m = problem.m
    eta_T = eta_samples[..., K, :]
    x = y.copy()
    if p_terminal is None:
        p = np.array(np.broadcast_to(problem.terminal.gradient(x, eta_T), (B, n)), dtype=float)
    else:
        p = np.array(np.broadcast_to(p_terminal, (B, n)), dtype=float)
    c = np.zeros(B)
    ok = np.ones(B, dtype=bool)
    fail_time = np.full(B, np.nan)
    if record:
        xs = np.empty((K + 1, B, n))
        ps = np.empty((K + 1, B, n))
        us = np.empty((K + 1, B, m))
        xs[K], ps[K] = x, p
    u_guess = None
    mids = 0.5 * (eta_samples[..., 1:, :] + eta_samples[..., :-1, :])
    h2, h6 = 0.5 * h, h / 6.0
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(K - 1, -1, -1):
            t1 = (k + 1) * h
            tm = t1 - h2
            t0 = k * h
            em = mids[..., k, :]
            fx1, fp1, fc1, u1, ok1 = _rhs(problem, t1, x, p, eta_samples[..., k + 1, :], u_guess)
            fx2, fp2, fc2, u2, ok2 = _rhs(problem, tm, x - h2 * fx1, p - h2 * fp1, em, u1)
            fx3, fp3, fc3, u3, ok3 = _rhs(problem, tm, x - h2 * fx2, p - h2 * fp2, em, u2)
            fx4, fp4, fc4, u4, ok4 = _rhs(problem, t0, x - h * fx3, p - h * fp3, eta_samples[..., k, :], u3)
            x = x - h6 * (fx1 + 2.0 * (fx2 + fx3) + fx4)
            p = p - h6 * (fp1 + 2.0 * (fp2 + fp3) + fp4)
            c = c - h6 * (fc1 + 2.0 * (fc2 + fc3) + fc4)
            u_guess = u4
            if record:
                us[k + 1] = u1
            good = (np.abs(x).max(axis=-1) <= blowup) & (np.abs(p).max(axis=-1) < np.inf)
            if not (ok1 is True and ok2 is True and ok3 is True and ok4 is True):
                good &= ok1 & ok2 & ok3 & ok4
            if not good.all():
                bad = ok & ~good
                fail_time[bad] = t0
                ok &= good
                x[~ok] = 0.0
                p[~ok] = 0.0
                c[~ok] = 0.0
                u_guess = np.where(ok[:, None], u_guess, 0.0)
            if record:
                xs[k], ps[k] = x, p
        if record:
            *_, u0, ok0 = _rhs(problem, 0.0, x, p, eta_samples[..., 0, :], u_guess)
            us[0] = u0
            ok &= ok0
    if not record:
        xs = x[None]
        ps = p[None]
        us = np.zeros((1, B, m))
    return Sweep(xs, ps, us, -c, ok, fail_time)


def _terminal_cost(problem: ControlProblem, y, eta_samples) -> np.ndarray:
    return np.asarray(problem.terminal.psi(y, eta_samples[..., -1, :]), dtype=float)


def integrate_pmp_backward(y, problem: ControlProblem, eta=None, blowup: float = 1e8) -> PMPTrajectory:
    """Integrate the PMP system backward from ``x(T) = y``, ``p(T) = grad psi(y)``."""
    grid = problem.grid
    samples = eta_samples_of(eta, grid)
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if not np.all(np.isfinite(y)):
        raise ValueError("terminal point must be finite")
    sw = backward_sweep(problem, y[None], samples, blowup=blowup)
    if not sw.ok[0]:
        raise DivergenceError(f"PMP integration diverged near t={sw.fail_time[0]:.6g}", time=float(sw.fail_time[0]))
    return _trajectory(problem, sw, 0, samples)


def _trajectory(problem: ControlProblem, sw: Sweep, i: int, samples) -> PMPTrajectory:
    xs = sw.states[:, i].copy()
    running = float(sw.running_cost[i])
    psi = float(_terminal_cost(problem, xs[-1], _subset_eta(samples, i) if samples.ndim == 3 else samples))
    return PMPTrajectory(problem.grid, xs, sw.adjoints[:, i].copy(), sw.controls[:, i].copy(),
                         running + psi, running)


def integrate_pmp_forward(x0, p0, problem: ControlProblem, eta=None):
    """Forward RK4 integration of the PMP system from (x(0), p(0)); returns (states, adjoints)."""
    grid = problem.grid
    samples = eta_samples_of(eta, grid)
    x = np.atleast_1d(np.asarray(x0, dtype=float))[None]
    p = np.atleast_1d(np.asarray(p0, dtype=float))[None]
    K, h = grid.steps, grid.dt
    xs = [x[0].copy()]
    ps = [p[0].copy()]
    u = None
    for k in range(K):
        t0 = k * h
        e0 = samples[k]
        e1 = samples[k + 1]
        em = 0.5 * (e0 + e1)
        fx1, fp1, _, u, _ = _rhs(problem, t0, x, p, e0, u)
        fx2, fp2, _, u, _ = _rhs(problem, t0 + h / 2, x + h / 2 * fx1, p + h / 2 * fp1, em, u)
        fx3, fp3, _, u, _ = _rhs(problem, t0 + h / 2, x + h / 2 * fx2, p + h / 2 * fp2, em, u)
        fx4, fp4, _, u, _ = _rhs(problem, t0 + h, x + h * fx3, p + h * fp3, e1, u)
        x = x + h / 6 * (fx1 + 2 * fx2 + 2 * fx3 + fx4)
        p = p + h / 6 * (fp1 + 2 * fp2 + 2 * fp3 + fp4)
        xs.append(x[0].copy())
        ps.append(p[0].copy())
    return np.array(xs), np.array(ps)


def forward_zero_control_endpoint(problem: ControlProblem, xbar, eta_samples) -> np.ndarray:
    """x(T) under u = 0 from each initial point (batched)."""
    grid = problem.grid
    K, h = grid.steps, grid.dt
    x = np.atleast_2d(np.asarray(xbar, dtype=float)).copy()
    u = np.zeros(x.shape[:-1] + (problem.m,))
    f = problem.dynamics.f
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(K):
            t0 = k * h
            e0 = eta_samples[..., k, :]
            e1 = eta_samples[..., k + 1, :]
            em = 0.5 * (e0 + e1)
            k1 = f(t0, x, u, e0)
            k2 = f(t0 + h / 2, x + h / 2 * k1, u, em)
            k3 = f(t0 + h / 2, x + h / 2 * k2, u, em)
            k4 = f(t0 + h, x + h * k3, u, e1)
            x = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return x


# ---------------------------------------------------------------------------
# batched Newton shooting


def _initial_residual(problem, y, xbar, eta_samples, blowup):
    sw = backward_sweep(problem, y, eta_samples, blowup=blowup, record=False)
    r = sw.states[0] - xbar
    r[~sw.ok] = np.inf
    return r


def newton_shoot(problem: ControlProblem, xbar, y0, eta_samples, cfg: ShootingConfig):
    """Solve ``x(0; y) = xbar`` by Newton from each row of ``y0``.

    ``xbar`` and ``y0`` are ``(B, n)``; ``eta_samples`` is shared ``(K+1, N)`` or
    per-row ``(B, K+1, N)``.  Returns ``(y, status, residual)``.
    """
    xbar = np.atleast_2d(np.asarray(xbar, dtype=float))
    y = np.array(np.atleast_2d(y0), dtype=float)
    B, n = y.shape
    xbar = np.broadcast_to(xbar, (B, n))
    status = np.full(B, MAX_ITER)
    r = _initial_residual(problem, y, xbar, eta_samples, cfg.blowup)
    rn = np.max(np.abs(r), axis=1)
    status[~np.isfinite(rn)] = DIVERGED
    active = np.isfinite(rn)
    polish = np.zeros(B, dtype=int)
    eye = np.eye(n)
    for _ in range(cfg.max_iter + cfg.polish_steps):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        ya = y[idx]
        hstep = cfg.fd_step * (1.0 + np.abs(ya))
        offs = np.transpose(hstep)[:, :, None] * eye[:, None, :]
        pert = np.stack([ya[None] + offs, ya[None] - offs]).reshape(2 * n * idx.size, n)
        eta_sub = _subset_eta(eta_samples, idx)
        if eta_sub.ndim == 3:
            eta_sub = np.concatenate([eta_sub] * (2 * n))
        sw = backward_sweep(problem, pert, eta_sub, blowup=cfg.blowup, record=False)
        x0 = sw.states[0].reshape(2, n, idx.size, n)
        okp = sw.ok.reshape(2, n, idx.size).all(axis=(0, 1))
        # J[b, i, j] = d x0_i / d y_j
        J = np.transpose((x0[0] - x0[1]) / (2.0 * np.transpose(hstep)[:, :, None]), (1, 2, 0))
        diverged = ~okp
        status[idx[diverged]] = DIVERGED
        with np.errstate(invalid="ignore"):
            det = np.linalg.det(np.where(okp[:, None, None], J, eye))
        degenerate = okp & (np.abs(det) < cfg.det_floor)
        status[idx[degenerate]] = DEGENERATE
        for i in idx[degenerate]:
            log.debug("abandoning start at y=%s: |det D_y x(0;y)| below floor", y[i])
        keep = okp & ~degenerate
        active[idx[~keep]] = False
        idx = idx[keep]
        if idx.size == 0:
            break
        step = np.linalg.solve(J[keep], r[idx][:, :, None])[:, :, 0]
        alpha = np.ones(idx.size)
        pending = np.ones(idx.size, dtype=bool)
        accepted = np.zeros(idx.size, dtype=bool)
        for _ in range(cfg.line_search_halvings + 1):
            sel = np.nonzero(pending)[0]
            cand = y[idx[sel]] - alpha[sel, None] * step[sel]
            rc = _initial_residual(problem, cand, xbar[idx[sel]], _subset_eta(eta_samples, idx[sel]), cfg.blowup)
            rcn = np.max(np.abs(rc), axis=1)
            better = (rcn < rn[idx[sel]]) | (rcn <= 1e-2 * cfg.tol)
            gi = idx[sel[better]]
            y[gi] = cand[better]
            r[gi] = rc[better]
            rn[gi] = rcn[better]
            accepted[sel[better]] = True
            pending[sel[better]] = False
            # a row already within tolerance that cannot improve is done polishing
            pending[sel[~better & (rn[idx[sel]] < cfg.tol)]] = False
            if not np.any(pending):
                break
            alpha[pending] *= 0.5
        within = rn[idx] < cfg.tol
        polish[idx[accepted & within]] += 1
        finished = ~accepted | (within & (polish[idx] > cfg.polish_steps))
        status[idx[finished]] = np.where(within[finished], CONVERGED, STALLED)
        active[idx[finished]] = False
    status[active & (rn < cfg.tol)] = CONVERGED
    return y, status, rn


def seed_points(n: int, radius: float, grid_points: int = 9) -> np.ndarray:
    """Deterministic multi-start seeds: a uniform grid for n <= 2, Halton points otherwise."""
    if n <= 2:
        axis = np.linspace(-radius, radius, grid_points)
        return np.stack(np.meshgrid(*([axis] * n), indexing="ij"), axis=-1).reshape(-1, n)
    pts = qmc.Halton(d=n, scramble=False).random(grid_points ** 2)
    return -radius + 2.0 * radius * pts


def _dedup_sorted(ys: np.ndarray, res: np.ndarray, tol: float) -> np.ndarray:
    """Lexicographic sort then merge points closer than ``tol`` (keeps the smaller residual)."""
    if len(ys) == 0:
        return ys
    order = np.lexsort(ys.T[::-1])
    ys, res = ys[order], res[order]
    kept: list[int] = []
    for i in range(len(ys)):
        for j, k in enumerate(kept):
            if np.linalg.norm(ys[i] - ys[k]) < tol:
                if res[i] < res[k]:
                    kept[j] = i
                break
        else:
            kept.append(i)
    out = ys[sorted(kept)]
    return out[np.lexsort(out.T[::-1])]


def shoot_batch(problem: ControlProblem, xbars, eta_samples, cfg: ShootingConfig,
                warm: Sequence[np.ndarray | None] | None = None) -> list[list[PMPTrajectory]]:
    """Find all PMP-stationary trajectories for each initial point in ``xbars``.

    ``eta_samples`` is shared ``(K+1, N)`` or one path per initial point
    ``(P, K+1, N)``.  ``warm[i]`` optionally lists terminal points to try first;
    with ``cfg.warm_start_only`` the grid seeds are skipped whenever a warm
    start converges.
    """
    xbars = np.atleast_2d(np.asarray(xbars, dtype=float))
    P, n = xbars.shape
    per_problem_eta = eta_samples.ndim == 3
    roots: list[np.ndarray | None] = [None] * P

    def run(groups: list[int], seeds_of) -> None:
        rows, grp = [], []
        for g in groups:
            s = seeds_of(g)
            rows.append(s)
            grp.append(np.full(len(s), g))
        if not rows:
            return
        y0 = np.concatenate(rows)
        gid = np.concatenate(grp)
        eta = eta_samples[gid] if per_problem_eta else eta_samples
        y, status, res = newton_shoot(problem, xbars[gid], y0, eta, cfg)
        for g in groups:
            sel = (gid == g) & (status == CONVERGED)
            found = _dedup_sorted(y[sel], res[sel], cfg.dedup_tol)
            if roots[g] is not None and len(roots[g]):
                found = _dedup_sorted(np.concatenate([roots[g], found]),
                                      np.zeros(len(roots[g]) + len(found)), cfg.dedup_tol)
            roots[g] = found

    cold = list(range(P))
    if warm is not None:
        warm_groups = [g for g in range(P) if warm[g] is not None and len(warm[g])]
        run(warm_groups, lambda g: np.atleast_2d(np.asarray(warm[g], dtype=float)))
        if cfg.warm_start_only:
            cold = [g for g in range(P) if roots[g] is None or len(roots[g]) == 0]

    if cold:
        fwd = None
        if cfg.include_forward_seed:
            eta_c = eta_samples[cold] if per_problem_eta else eta_samples
            fwd = forward_zero_control_endpoint(problem, xbars[cold], eta_c)
        pos = {g: i for i, g in enumerate(cold)}

        def cold_seeds(g):
            radius = cfg.box_radius if cfg.box_radius is not None else 2.0 * (1.0 + np.max(np.abs(xbars[g])))
            s = seed_points(n, radius, cfg.grid_points)
            if fwd is not None and np.all(np.isfinite(fwd[pos[g]])):
                s = np.vstack([s, fwd[pos[g]]])
            return s

        run(cold, cold_seeds)

    out: list[list[PMPTrajectory]] = []
    flat_y, flat_g = [], []
    for g in range(P):
        r = roots[g] if roots[g] is not None else np.zeros((0, n))
        flat_y.append(r)
        flat_g.append(np.full(len(r), g))
    ys = np.concatenate(flat_y) if flat_y else np.zeros((0, n))
    gs = np.concatenate(flat_g) if flat_g else np.zeros(0, dtype=int)
    if len(ys):
        eta = eta_samples[gs] if per_problem_eta else eta_samples
        sw = backward_sweep(problem, ys, eta, blowup=cfg.blowup)
        psi = _terminal_cost(problem, ys, eta)
    for g in range(P):
        trajs = []
        for i in np.nonzero(gs == g)[0]:
            if not sw.ok[i]:
                continue
            running = float(sw.running_cost[i])
            trajs.append(PMPTrajectory(problem.grid, sw.states[:, i].copy(), sw.adjoints[:, i].copy(),
                                       sw.controls[:, i].copy(), running + float(np.ravel(psi)[i]), running))
        out.append(trajs)
    return out


def shoot(xbar, problem: ControlProblem, eta=None, cfg: ShootingConfig | None = None,
          warm=None) -> list[PMPTrajectory]:
    """All distinct PMP-stationary trajectories starting at ``xbar`` (sorted by terminal point)."""
    cfg = cfg or ShootingConfig()
    samples = eta_samples_of(eta, problem.grid)
    xbar = np.atleast_1d(np.asarray(xbar, dtype=float))
    res = shoot_batch(problem, xbar[None], samples, cfg, None if warm is None else [warm])[0]
    if not res:
        raise NoCandidateError(f"no PMP-stationary trajectory found from xbar={xbar}")
    return res


# ---------------------------------------------------------------------------
# optimal selection


@dataclass
class OCPSolution:
    """PMP candidates from one initial point, with the optimal subset and tie diagnostics."""

    initial_point: np.ndarray
    candidates: list
    optimal: list
    tie_tol: float
    separation_threshold: float
    multiple: bool
    cost_gap: float
    max_separation: float

    @property
    def costs(self) -> np.ndarray:
        return np.array([c.cost for c in self.candidates])

    @property
    def min_cost(self) -> float:
        return float(self.costs.min())

    @property
    def selected(self) -> PMPTrajectory:
        """Optimal candidate with the lexicographically smallest terminal point."""
        return self.candidates[self.optimal[0]]

    @property
    def optimal_terminals(self) -> np.ndarray:
        return np.array([self.candidates[i].terminal for i in self.optimal])


def classify_candidates(xbar, candidates: list[PMPTrajectory], tie_tol: float = 1e-7,
                        separation: float = 1e-3) -> OCPSolution:
    if not candidates:
        raise NoCandidateError(f"no PMP-stationary trajectory found from xbar={xbar}")
    cands = sorted(candidates, key=lambda c: tuple(c.terminal))
    costs = np.array([c.cost for c in cands])
    jmin = costs.min()
    opt = [i for i, j in enumerate(costs) if j <= jmin + tie_tol * (1.0 + abs(jmin))]
    others = costs[[i for i in range(len(cands)) if i not in opt]]
    gap = float(others.min() - jmin) if others.size else float("inf")
    sep = 0.0
    for a in opt:
        for b in opt:
            if a < b:
                sep = max(sep, float(np.linalg.norm(cands[a].terminal - cands[b].terminal)))
    return OCPSolution(np.atleast_1d(np.asarray(xbar, dtype=float)), cands, opt, tie_tol, separation,
                       len(opt) >= 2 and sep >= separation, gap, sep)


def solve_ocp(xbar, problem: ControlProblem, eta=None, cfg: ShootingConfig | None = None,
              warm=None) -> OCPSolution:
    """Shoot, cost every candidate, and keep the optimal ones (relative tie tolerance)."""
    cfg = cfg or ShootingConfig()
    cands = shoot(xbar, problem, eta, cfg, warm)
    return classify_candidates(xbar, cands, cfg.tie_tol, cfg.separation)


def a_priori_violations(traj: PMPTrajectory, beta0: float, alpha0: float | None = None) -> list[str]:
    """Check a trajectory against the a priori state/control radii."""
    out = []
    xmax = float(np.max(np.linalg.norm(traj.states, axis=1)))
    if xmax > beta0:
        out.append(f"state radius {xmax:.4g} exceeds beta0={beta0:.4g}")
    if alpha0 is not None:
        umax = float(np.max(np.linalg.norm(traj.controls, axis=1)))
        if umax > alpha0:
            out.append(f"control radius {umax:.4g} exceeds alpha0={alpha0:.4g}")
    return out


def with_box(cfg: ShootingConfig, radius: float) -> ShootingConfig:
    return cfg if cfg.box_radius is not None else replace(cfg, box_radius=float(radius))
