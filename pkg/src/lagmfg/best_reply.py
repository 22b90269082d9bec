"""The best-reply map: moments -> optimal trajectories -> moments."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import BestReplyError, NoCandidateError
from .model import GameSpec, MomentPath, reachable_radius
from .pmp import OCPSolution, ShootingConfig, classify_candidates, eta_samples_of, shoot_batch

log = logging.getLogger(__name__)

SELECTION_RULE = "lexicographic-min terminal point"


@dataclass(frozen=True)
class BestReplyConfig:
    """Shooting settings plus the tie/separation thresholds used by the map."""

    shooting: ShootingConfig = field(default_factory=ShootingConfig)
    tie_tol: float = 1e-7
    separation: float = 1e-3

    def shooting_for(self, spec: GameSpec) -> ShootingConfig:
        cfg = self.shooting
        if cfg.box_radius is None:
            from dataclasses import replace
            cfg = replace(cfg, box_radius=reachable_radius(spec, safety=1.0))
        return cfg


@dataclass
class BestReplyOutput:
    """``eta_new`` with the per-player OCP solutions behind it.

    ``solutions[j]`` belongs to the player group ``groups[j]`` (indices into the
    ensemble sharing one initial point); ``tie_mass`` sums the weights of tied
    players.
    """

    eta: MomentPath
    solutions: list
    groups: list
    tie_mass: float
    selection_rule: str = SELECTION_RULE

    def player_solution(self, j: int) -> OCPSolution:
        for g, idx in enumerate(self.groups):
            if j in idx:
                return self.solutions[g]
        raise IndexError(j)

    def selected_states(self) -> np.ndarray:
        """Selected trajectories per ensemble player, shape ``(P, K+1, n)``."""
        P = sum(len(g) for g in self.groups)
        first = self.solutions[0].selected.states
        out = np.empty((P,) + first.shape)
        for sol, idx in zip(self.solutions, self.groups):
            out[idx] = sol.selected.states
        return out

    def warm_roots(self) -> list:
        return [np.array([c.terminal for c in sol.candidates]) for sol in self.solutions]


def player_groups(spec: GameSpec) -> tuple[np.ndarray, list]:
    """Distinct initial points and the ensemble indices that share each one."""
    pts = spec.ensemble.initial_points
    uniq, inverse = np.unique(pts, axis=0, return_inverse=True)
    inverse = np.asarray(inverse).reshape(-1)
    return uniq, [np.nonzero(inverse == g)[0] for g in range(len(uniq))]


def aggregate_moments(spec: GameSpec, states: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """``eta_i(t_k) = sum_j w_j phi_i(t_k, x_j(t_k))`` for states ``(..., P, K+1, n)``."""
    nodes = spec.grid.nodes
    out = np.empty(states.shape[:-3] + (len(nodes), spec.kernels.count))
    for k, t in enumerate(nodes):
        vals = spec.kernels.phi(float(t), states[..., k, :])
        out[..., k, :] = np.tensordot(vals, weights, axes=([-2], [0])) if vals.ndim >= 2 else vals * weights
    return out


def best_reply_batch(etas: np.ndarray, spec: GameSpec, cfg: BestReplyConfig | None = None,
                     warm: list | None = None, iteration: int | None = None):
    """Apply the best-reply map to a batch of moment paths ``(B, K+1, N)``.

    ``warm[b][g]`` lists terminal points to warm-start player group ``g`` for
    path ``b``.  Returns ``(new etas, tie masses, solutions[b][g], groups)``.
    """
    cfg = cfg or BestReplyConfig()
    etas = np.asarray(etas, dtype=float)
    B = etas.shape[0]
    uniq, groups = player_groups(spec)
    G = len(uniq)
    weights = spec.ensemble.weights
    gweights = np.array([weights[idx].sum() for idx in groups])
    xbars = np.tile(uniq, (B, 1))
    per = np.repeat(etas, G, axis=0)
    wflat = None
    if warm is not None:
        wflat = [warm[b][g] if warm[b] is not None else None for b in range(B) for g in range(G)]
    trajs = shoot_batch(spec.problem, xbars, per, cfg.shooting_for(spec), wflat)
    sols = []
    for b in range(B):
        row = []
        for g in range(G):
            cands = trajs[b * G + g]
            if not cands:
                raise BestReplyError(f"player {int(groups[g][0])} has no PMP candidate"
                                     + (f" at iteration {iteration}" if iteration is not None else ""),
                                     player=int(groups[g][0]), iteration=iteration)
            row.append(classify_candidates(uniq[g], cands, cfg.tie_tol, cfg.separation))
        sols.append(row)
    states = np.stack([np.stack([s.selected.states for s in row]) for row in sols])
    new = aggregate_moments(spec, states, gweights)
    ties = np.array([sum(gweights[g] for g in range(G) if row[g].multiple) for row in sols])
    return new, np.clip(ties, 0.0, 1.0), sols, groups


def apply_best_reply(eta, spec: GameSpec, cfg: BestReplyConfig | None = None, warm: list | None = None,
                     iteration: int | None = None) -> BestReplyOutput:
    """One evaluation of the best-reply map at ``eta``."""
    samples = eta_samples_of(eta, spec.grid, spec.kernels.count)
    if samples.ndim != 2 or samples.shape[1] != spec.kernels.count:
        raise ValueError("eta must have one sample row per grid node and one column per kernel")
    new, ties, sols, groups = best_reply_batch(samples[None], spec, cfg, None if warm is None else [warm], iteration)
    return BestReplyOutput(MomentPath(spec.grid, new[0]), sols[0], groups, float(ties[0]))


# ---------------------------------------------------------------------------
# multiplicity scan


@dataclass
class MultiplicityReport:
    """Initial points whose problem has two optimal solutions separated by at least ``1/nu``."""

    grid: np.ndarray
    flagged: np.ndarray
    measure: float
    nu: float
    cost_gap: np.ndarray
    separation: np.ndarray
    failures: list

    @property
    def flagged_points(self) -> np.ndarray:
        return self.grid[self.flagged]

    def to_dict(self) -> dict:
        return dict(nu=self.nu, points=int(len(self.grid)), flagged=self.flagged_points.tolist(),
                    measure=self.measure, failures=[list(map(float, np.atleast_1d(f))) for f in self.failures])


def _cell_weights(grid: np.ndarray) -> np.ndarray:
    """Lebesgue weight of each point's cell (1-D grids; uniform weights otherwise)."""
    if grid.shape[1] != 1 or len(grid) < 2:
        return np.full(len(grid), 1.0 / len(grid))
    x = grid[:, 0]
    order = np.argsort(x)
    xs = x[order]
    edges = np.concatenate([[xs[0]], 0.5 * (xs[1:] + xs[:-1]), [xs[-1]]])
    w = np.empty(len(x))
    w[order] = np.diff(edges)
    return w / w.sum()


def multiplicity_scan(spec: GameSpec, initial_grid, nu: float, eta=None, cfg: BestReplyConfig | None = None,
                      chunk: int = 512) -> MultiplicityReport:
    """Run solve_ocp from every grid point and flag ties with terminal separation >= 1/nu."""
    cfg = cfg or BestReplyConfig()
    grid = np.asarray(initial_grid, dtype=float)
    if grid.ndim == 1:
        grid = grid[:, None]
    samples = eta_samples_of(eta, spec.grid, spec.kernels.count)
    sep = 1.0 / nu
    shoot_cfg = cfg.shooting_for(spec)
    flagged = np.zeros(len(grid), dtype=bool)
    gaps = np.full(len(grid), np.inf)
    seps = np.zeros(len(grid))
    failures = []
    for start in range(0, len(grid), chunk):
        block = grid[start:start + chunk]
        trajs = shoot_batch(spec.problem, block, samples, shoot_cfg)
        for i, cands in enumerate(trajs):
            j = start + i
            if not cands:
                log.warning("multiplicity scan: no candidate from xbar=%s", block[i])
                failures.append(block[i])
                continue
            sol = classify_candidates(block[i], cands, cfg.tie_tol, sep)
            seps[j] = sol.max_separation
            gaps[j] = sol.cost_gap
            flagged[j] = sol.multiple
    ok = np.ones(len(grid), dtype=bool)
    for f in failures:
        ok &= ~np.all(grid == f, axis=1)
    w = _cell_weights(grid)
    measure = float(w[flagged & ok].sum() / w[ok].sum()) if ok.any() else float("nan")
    return MultiplicityReport(grid, flagged, measure, nu, gaps, seps, failures)
