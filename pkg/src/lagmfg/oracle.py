"""Independent verifier for the shooting solver.

Two methods that share the time grid with :mod:`lagmfg.pmp` but not its
solution strategy:

* direct transcription: piecewise-constant controls, forward RK4, gradient by
  the discrete adjoint of the RK4 step, projected gradient descent with
  Barzilai-Borwein steps and backtracking from many random starts;
* terminal-point scan (scalar state): for every terminal point ``y`` on a
  grid, the extremal from ``xbar`` to ``y`` is found by Newton on the free
  terminal adjoint, giving the value profile ``y -> J(y)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import PreconditionError
from .model import ControlProblem
from .pmp import backward_sweep, eta_samples_of

log = logging.getLogger(__name__)

_B = np.array([1.0, 2.0, 2.0, 1.0]) / 6.0


@dataclass
class TranscribedProblem:
    """Direct transcription of one player's problem on the shared time grid."""

    problem: ControlProblem
    initial_point: np.ndarray
    eta_samples: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.problem.grid.steps, self.problem.m

    def _stage_inputs(self, k: int):
        e = self.eta_samples
        e0, e1 = e[k], e[k + 1]
        h = self.problem.grid.dt
        t0 = k * h
        em = 0.5 * (e0 + e1)
        return (t0, t0 + 0.5 * h, t0 + 0.5 * h, t0 + h), (e0, em, em, e1)

    def simulate(self, U: np.ndarray):
        """Forward RK4 with controls held constant on each step.

        ``U`` is ``(..., K, m)``; returns states ``(..., K+1, n)`` and total cost ``(...)``.
        """
        pb = self.problem
        dyn, run = pb.dynamics, pb.running
        K, h = pb.grid.steps, pb.grid.dt
        U = np.asarray(U, dtype=float)
        batch = U.shape[:-2]
        x = np.broadcast_to(self.initial_point, batch + (pb.n,)).astype(float)
        xs = np.empty(batch + (K + 1, pb.n))
        xs[..., 0, :] = x
        c = np.zeros(batch)
        for k in range(K):
            ts, es = self._stage_inputs(k)
            u = U[..., k, :]
            k1 = dyn.f(ts[0], x, u, es[0])
            z2 = x + 0.5 * h * k1
            k2 = dyn.f(ts[1], z2, u, es[1])
            z3 = x + 0.5 * h * k2
            k3 = dyn.f(ts[2], z3, u, es[2])
            z4 = x + h * k3
            k4 = dyn.f(ts[3], z4, u, es[3])
            c = c + h * (_B[0] * run.L(ts[0], x, u, es[0]) + _B[1] * run.L(ts[1], z2, u, es[1])
                         + _B[2] * run.L(ts[2], z3, u, es[2]) + _B[3] * run.L(ts[3], z4, u, es[3]))
            x = x + h * (_B[0] * k1 + _B[1] * k2 + _B[2] * k3 + _B[3] * k4)
            xs[..., k + 1, :] = x
        cost = c + self.problem.terminal.psi(x, self.eta_samples[-1])
        return xs, cost

    def cost(self, U: np.ndarray) -> np.ndarray:
        return self.simulate(U)[1]

    def gradient(self, U: np.ndarray):
        """Cost and its exact gradient with respect to ``U`` (discrete adjoint of RK4)."""
        pb = self.problem
        dyn, run = pb.dynamics, pb.running
        K, h = pb.grid.steps, pb.grid.dt
        U = np.asarray(U, dtype=float)
        xs, cost = self.simulate(U)
        lam = np.array(pb.terminal.gradient(xs[..., K, :], self.eta_samples[-1]), dtype=float)
        grad = np.empty_like(U)
        for k in range(K - 1, -1, -1):
            ts, es = self._stage_inputs(k)
            u = U[..., k, :]
            x = xs[..., k, :]
            # rebuild the stage inputs
            z = [x]
            k1 = dyn.f(ts[0], x, u, es[0])
            z.append(x + 0.5 * h * k1)
            k2 = dyn.f(ts[1], z[1], u, es[1])
            z.append(x + 0.5 * h * k2)
            k3 = dyn.f(ts[2], z[2], u, es[2])
            z.append(x + h * k3)
            feed = (0.5 * h, 0.5 * h, h)
            g_u = np.zeros_like(u)
            q_next = None
            lam_new = lam.copy()
            for j in (3, 2, 1, 0):
                s = h * _B[j] * lam
                if q_next is not None:
                    s = s + feed[j] * q_next
                w = h * _B[j]
                fx = dyn.f_x(ts[j], z[j], u, es[j])
                G = dyn.fields(ts[j], z[j], es[j])
                q = (s[..., None, :] @ fx)[..., 0, :] + w * run.L_x(ts[j], z[j], u, es[j])
                g_u = g_u + (s[..., None, :] @ G)[..., 0, :] + w * run.L_u(ts[j], z[j], u, es[j])
                lam_new = lam_new + q
                q_next = q
            grad[..., k, :] = g_u
            lam = lam_new
        return cost, grad


@dataclass
class LocalMinimum:
    cost: float
    terminal: np.ndarray
    controls: np.ndarray
    states: np.ndarray
    starts: int = 1


@dataclass
class DirectResult:
    """Best local minimum plus every distinct one; ``runs`` has one row per start."""

    best: LocalMinimum
    minima: list
    runs: list

    @property
    def cost(self) -> float:
        return self.best.cost

    @property
    def terminal(self) -> np.ndarray:
        return self.best.terminal


def _project(U, lo, hi):
    if lo is None and hi is None:
        return U
    return np.clip(U, lo if lo is not None else -np.inf, hi if hi is not None else np.inf)


def projected_gradient(tp: TranscribedProblem, U0: np.ndarray, max_iter: int = 3000, gtol: float = 1e-9,
                       ftol: float = 1e-15):
    """Batched projected gradient descent with BB steps and Armijo backtracking.

    Returns ``(U, cost, status)`` with status 0 = converged, 1 = iteration cap,
    2 = line-search failure.
    """
    dyn = tp.problem.dynamics
    lo, hi = dyn.u_lo, dyn.u_hi
    h = tp.problem.grid.dt
    U = _project(np.array(U0, dtype=float), lo, hi)
    S = U.shape[0]
    J, g = tp.gradient(U)
    step = np.full(S, 1.0)
    status = np.ones(S, dtype=int)
    active = np.ones(S, dtype=bool)
    U_prev = g_prev = None
    for it in range(max_iter):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        # projected-gradient stationarity measure, scaled to a continuous-time gradient
        pg = (U[idx] - _project(U[idx] - g[idx] / h, lo, hi))
        pgn = np.max(np.abs(pg), axis=(1, 2))
        done = pgn < gtol
        status[idx[done]] = 0
        active[idx[done]] = False
        idx = idx[~done]
        if idx.size == 0:
            break
        if U_prev is not None:
            sU = (U - U_prev)[idx]
            sg = (g - g_prev)[idx]
            num = np.sum(sU * sU, axis=(1, 2))
            den = np.sum(sU * sg, axis=(1, 2))
            bb = np.where(den > 0, num / np.where(den > 0, den, 1.0), step[idx] * 2.0)
            step[idx] = np.clip(bb, 1e-12, 1e12)
        U_prev, g_prev = U.copy(), g.copy()
        alpha = step[idx].copy()
        pending = np.ones(idx.size, dtype=bool)
        newU = U[idx].copy()
        newJ = J[idx].copy()
        for _ in range(60):
            sel = np.nonzero(pending)[0]
            cand = _project(U[idx[sel]] - alpha[sel, None, None] * g[idx[sel]], lo, hi)
            Jc = tp.cost(cand)
            decrease = np.sum(g[idx[sel]] * (U[idx[sel]] - cand), axis=(1, 2))
            ok = Jc <= J[idx[sel]] - 1e-4 * decrease + ftol * (1.0 + np.abs(J[idx[sel]]))
            ok &= np.isfinite(Jc)
            newU[sel[ok]] = cand[ok]
            newJ[sel[ok]] = Jc[ok]
            pending[sel[ok]] = False
            if not pending.any():
                break
            alpha[pending] *= 0.5
        failed = idx[pending]
        if failed.size:
            for i in failed:
                log.info("direct oracle: line search failed on start %d at iteration %d", i, it)
            status[failed] = 2
            active[failed] = False
        moved = idx[~pending]
        step[moved] = alpha[~pending]
        U[moved] = newU[~pending]
        Jm, gm = tp.gradient(U[moved])
        J[moved] = Jm
        g[moved] = gm
    return U, J, status


def solve_direct(xbar, problem: ControlProblem, eta=None, starts: int = 64, seed: int = 0,
                 max_iter: int = 3000, gtol: float = 1e-9, init_scale: float = 2.0,
                 cost_tol: float = 1e-6, terminal_tol: float = 1e-3) -> DirectResult:
    """Multi-start direct transcription; returns the best and all distinct local minima.

    Starts are a random constant control in ``[-init_scale, init_scale]^m`` plus
    small i.i.d. noise per step.  Local minima are merged when both their costs
    (within ``cost_tol``) and terminal points (within ``terminal_tol``) agree.
    """
    if starts < 1:
        raise ValueError("starts must be >= 1")
    grid = problem.grid
    K, m = grid.steps, problem.m
    samples = eta_samples_of(eta, grid)
    if samples.ndim != 2:
        raise ValueError("solve_direct takes a single moment path")
    xbar = np.atleast_1d(np.asarray(xbar, dtype=float))
    tp = TranscribedProblem(problem, xbar, samples)
    rng = np.random.default_rng(seed)
    U0 = rng.uniform(-init_scale, init_scale, (starts, 1, m)) + 0.1 * rng.standard_normal((starts, K, m))
    U, J, status = projected_gradient(tp, U0, max_iter=max_iter, gtol=gtol)
    xs, J = tp.simulate(U)
    runs = [dict(start=i, cost=float(J[i]), terminal=xs[i, -1].copy(), status=int(status[i])) for i in range(starts)]
    usable = [i for i in range(starts) if status[i] != 2 and np.isfinite(J[i])]
    if not usable:
        raise RuntimeError("every direct-transcription start failed")
    order = sorted(usable, key=lambda i: (float(J[i]), tuple(xs[i, -1])))
    minima: list[LocalMinimum] = []
    for i in order:
        for mn in minima:
            if abs(mn.cost - J[i]) < cost_tol and np.linalg.norm(mn.terminal - xs[i, -1]) < terminal_tol:
                mn.starts += 1
                break
        else:
            minima.append(LocalMinimum(float(J[i]), xs[i, -1].copy(), U[i].copy(), xs[i].copy()))
    return DirectResult(minima[0], minima, runs)


def adjoint_gradient_check(problem: ControlProblem, xbar, eta=None, samples: int = 20, seed: int = 0,
                           step: float = 1e-6) -> float:
    """Max relative error between the discrete-adjoint gradient and central differences.

    Each of the ``samples`` random control vectors is probed along a random unit
    direction (directional derivative), which keeps the check cheap at large K.
    """
    grid = problem.grid
    tp = TranscribedProblem(problem, np.atleast_1d(np.asarray(xbar, dtype=float)), eta_samples_of(eta, grid))
    rng = np.random.default_rng(seed)
    U = rng.uniform(-1.0, 1.0, (samples, grid.steps, problem.m))
    D = rng.standard_normal(U.shape)
    D /= np.linalg.norm(D.reshape(samples, -1), axis=1)[:, None, None]
    _, g = tp.gradient(U)
    exact = np.sum(g * D, axis=(1, 2))
    fd = (tp.cost(U + step * D) - tp.cost(U - step * D)) / (2 * step)
    return float(np.max(np.abs(exact - fd) / np.maximum(1.0, np.abs(fd))))


# ---------------------------------------------------------------------------
# terminal-point scan


@dataclass
class ScanProfile:
    """Value profile over terminal points; ``accepted`` marks matched grid points."""

    y: np.ndarray
    cost: np.ndarray
    accepted: np.ndarray
    adjoint: np.ndarray
    minima_y: np.ndarray
    minima_cost: np.ndarray


def _x0_of_q(problem, y, q, xbar, samples):
    sw = backward_sweep(problem, y, samples, p_terminal=q, record=False)
    r = sw.states[0] - xbar
    r[~sw.ok] = np.nan
    return r, sw.running_cost


def scan_terminal_scalar(xbar, problem: ControlProblem, eta=None, y_range=(-2.0, 2.0),
                         resolution: float = 1e-3, match_tol: float = 1e-9, max_newton: int = 30) -> ScanProfile:
    """Cost of the extremal from ``xbar`` to each terminal point ``y`` (scalar state).

    For each ``y`` the terminal adjoint ``q = p(T)`` is left free and Newton-solved
    so that ``x(0) = xbar``; the point is accepted when the match residual is
    below ``match_tol``.  ``J(y) = running cost + psi(y)``; stationary points of J
    are exactly the PMP candidates, local minima are refined by a parabola.
    """
    if problem.n != 1:
        raise PreconditionError("scan_terminal_scalar needs a scalar state")
    grid = problem.grid
    samples = eta_samples_of(eta, grid)
    lo, hi = map(float, y_range)
    count = int(round((hi - lo) / resolution)) + 1
    ys = np.linspace(lo, hi, count)[:, None]
    xb = float(np.atleast_1d(xbar)[0])
    q = np.zeros((count, 1))
    res, run = _x0_of_q(problem, ys, q, xb, samples)
    dq = 1e-6
    for _ in range(max_newton):
        todo = np.nonzero(~(np.abs(res[:, 0]) < match_tol))[0]
        if todo.size == 0:
            break
        rp, _ = _x0_of_q(problem, ys[todo], q[todo] + dq, xb, samples)
        rm, _ = _x0_of_q(problem, ys[todo], q[todo] - dq, xb, samples)
        slope = (rp - rm) / (2 * dq)
        good = np.isfinite(slope[:, 0]) & (np.abs(slope[:, 0]) > 1e-14) & np.isfinite(res[todo, 0])
        step = np.where(good[:, None], res[todo] / np.where(good[:, None], slope, 1.0), 0.0)
        step = np.clip(step, -10.0, 10.0)
        alpha = np.ones(todo.size)
        base = np.abs(res[todo, 0])
        pending = good.copy()
        for _ in range(20):
            sel = np.nonzero(pending)[0]
            if sel.size == 0:
                break
            qc = q[todo[sel]] - alpha[sel, None] * step[sel]
            rc, rn = _x0_of_q(problem, ys[todo[sel]], qc, xb, samples)
            ok = np.abs(rc[:, 0]) < base[sel]
            tgt = todo[sel[ok]]
            q[tgt] = qc[ok]
            res[tgt] = rc[ok]
            run[tgt] = rn[ok]
            pending[sel[ok]] = False
            alpha[pending] *= 0.5
    accepted = np.abs(res[:, 0]) < match_tol
    if not accepted.any():
        raise PreconditionError("terminal scan matched no grid point; widen y_range")
    psi = np.asarray(problem.terminal.psi(ys, samples[-1]), dtype=float)
    cost = np.where(accepted, run + psi, np.nan)
    my, mc = [], []
    idx = np.nonzero(accepted)[0]
    for a, b, c in zip(idx[:-2], idx[1:-1], idx[2:]):
        if not (b == a + 1 and c == b + 1):
            continue
        if cost[b] < cost[a] and cost[b] <= cost[c]:
            y0, y1, y2 = ys[a, 0], ys[b, 0], ys[c, 0]
            f0, f1, f2 = cost[a], cost[b], cost[c]
            curv = f0 - 2 * f1 + f2
            off = 0.5 * (f0 - f2) / curv if curv > 0 else 0.0
            hstep = y1 - y0
            my.append(y1 + off * hstep)
            mc.append(f1 - 0.25 * (f0 - f2) * off)
    return ScanProfile(ys[:, 0], cost, accepted, q[:, 0], np.array(my), np.array(mc))
