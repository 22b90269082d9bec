"""Picard iteration of the best-reply map and empirical stability classification."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .best_reply import BestReplyConfig, best_reply_batch
from .errors import BestReplyError, PreconditionError
from .model import GameSpec, MomentPath, moment_bound
from .pmp import eta_samples_of

log = logging.getLogger(__name__)

CONVERGED, MAX_ITER, DIVERGED = "converged", "max_iter", "diverged"


@dataclass
class FixedPointRun:
    """History of one Picard run; ``residuals[k]`` is ``|eta^(k+1) - eta^(k)|_inf``."""

    history: list
    residuals: list
    damping: list
    outcome: str
    tie_mass: list
    tol: float

    @property
    def eta_star(self) -> MomentPath:
        return self.history[-1]

    @property
    def iterations(self) -> int:
        return len(self.residuals)

    @property
    def converged(self) -> bool:
        return self.outcome == CONVERGED

    def to_dict(self) -> dict:
        return dict(outcome=self.outcome, iterations=self.iterations, tol=self.tol,
                    residuals=[float(r) for r in self.residuals], damping=[float(d) for d in self.damping],
                    tie_mass=[float(t) for t in self.tie_mass])


@dataclass(frozen=True)
class PicardConfig:
    """Picard settings; ``adaptive`` halves the damping once after a residual increase."""

    tol: float = 1e-8
    max_iter: int = 500
    damping: float = 1.0
    adaptive: bool = True
    fallback_damping: float = 0.5
    blowup_factor: float = 10.0
    keep_history: bool = True
    best_reply: BestReplyConfig = field(default_factory=BestReplyConfig)

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if not 0.0 < self.damping <= 1.0:
            raise ValueError("damping must lie in (0, 1]")


def _gamma0(spec: GameSpec, gamma0: float | None) -> float:
    if gamma0 is not None:
        return float(gamma0)
    try:
        return moment_bound(spec, step=max(1e-3, 1e-3 * spec.reach_radius) if spec.reach_radius else 1e-3)
    except (ValueError, FloatingPointError, OverflowError):
        return float("inf")


def picard_batch(etas0: np.ndarray, spec: GameSpec, cfg: PicardConfig | None = None,
                 gamma0: float | None = None, callback=None):
    """Run independent Picard iterations for a batch of starting paths ``(B, K+1, N)``.

    Returns a list of :class:`FixedPointRun`.  Each row stops on its own
    criterion; the remaining rows keep being evaluated in one batched call.
    """
    cfg = cfg or PicardConfig()
    etas = np.array(etas0, dtype=float)
    B = etas.shape[0]
    g0 = _gamma0(spec, gamma0)
    limit = cfg.blowup_factor * g0
    hist = [[MomentPath(spec.grid, etas[b].copy())] if cfg.keep_history else [] for b in range(B)]
    last = [MomentPath(spec.grid, etas[b].copy()) for b in range(B)]
    res = [[] for _ in range(B)]
    damp = [[] for _ in range(B)]
    ties = [[] for _ in range(B)]
    theta = np.full(B, cfg.damping)
    fell_back = np.zeros(B, dtype=bool)
    outcome = [MAX_ITER] * B
    active = np.ones(B, dtype=bool)
    warm = [None] * B
    for it in range(1, cfg.max_iter + 1):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        try:
            new, tm, sols, _ = best_reply_batch(etas[idx], spec, cfg.best_reply, [warm[b] for b in idx], iteration=it)
        except BestReplyError as err:
            err.iteration = it
            raise
        for j, b in enumerate(idx):
            warm[b] = [np.array([c.terminal for c in s.candidates]) for s in sols[j]]
            applied = float(theta[b])
            nxt = etas[b] + applied * (new[j] - etas[b])
            r = float(np.max(np.abs(nxt - etas[b])))
            if cfg.adaptive and not fell_back[b] and res[b] and r > res[b][-1]:
                theta[b] = min(theta[b], cfg.fallback_damping)
                fell_back[b] = True
            res[b].append(r)
            damp[b].append(applied)
            ties[b].append(float(tm[j]))
            etas[b] = nxt
            path = MomentPath(spec.grid, nxt.copy())
            last[b] = path
            if cfg.keep_history:
                hist[b].append(path)
            if not np.all(np.isfinite(nxt)) or np.max(np.abs(nxt)) > limit:
                outcome[b] = DIVERGED
                active[b] = False
            elif r < cfg.tol:
                outcome[b] = CONVERGED
                active[b] = False
        if callback is not None:
            callback(it, etas, active)
    runs = []
    for b in range(B):
        h = hist[b] if cfg.keep_history else [last[b]]
        runs.append(FixedPointRun(h, res[b], damp[b], outcome[b], ties[b], cfg.tol))
    return runs


def picard_iterate(eta0, spec: GameSpec, tol: float = 1e-8, max_iter: int = 500, damping: float = 1.0,
                   adaptive: bool = True, best_reply: BestReplyConfig | None = None,
                   gamma0: float | None = None, keep_history: bool = True) -> FixedPointRun:
    """``eta^(k+1) = (1 - theta) eta^(k) + theta Phi(eta^(k))`` until the step is below ``tol``."""
    cfg = PicardConfig(tol=tol, max_iter=max_iter, damping=damping, adaptive=adaptive,
                       keep_history=keep_history, best_reply=best_reply or BestReplyConfig())
    samples = eta_samples_of(eta0, spec.grid, spec.kernels.count)
    return picard_batch(samples[None], spec, cfg, gamma0)[0]


# ---------------------------------------------------------------------------
# stability classification


@dataclass
class StabilityEvidence:
    classification: str
    epsilon: float
    max_excursion: list
    final_distance: list
    iterations: list
    fixed_point_residual: float
    directions_seed: int
    thresholds: tuple

    def to_dict(self) -> dict:
        return dict(classification=self.classification, epsilon=self.epsilon,
                    max_excursion=self.max_excursion, final_distance=self.final_distance,
                    iterations=self.iterations, fixed_point_residual=self.fixed_point_residual,
                    seed=self.directions_seed, thresholds=list(self.thresholds))


def probe_directions(grid, count: int, n_moments: int, seed: int, modes: int = 4) -> np.ndarray:
    """Seeded smooth directions: random low-mode sine/cosine series in t, unit sup norm."""
    rng = np.random.default_rng(seed)
    t = grid.nodes / grid.horizon
    basis = [np.ones_like(t)]
    for k in range(1, modes + 1):
        basis += [np.sin(np.pi * k * t / 2.0), np.cos(np.pi * k * t)]
    basis = np.array(basis)
    coef = rng.standard_normal((count, n_moments, len(basis)))
    d = np.einsum("pnb,bk->pkn", coef, basis)
    d /= np.max(np.abs(d), axis=(1, 2), keepdims=True)
    return d


def classify_stability(eta_star, spec: GameSpec, epsilon: float = 1e-3, n_probes: int = 8, seed: int = 0,
                       max_iter: int = 200, verify_tol: float = 1e-6, return_factor: float = 0.1,
                       escape_factor: float = 10.0, best_reply: BestReplyConfig | None = None,
                       directions: np.ndarray | None = None) -> StabilityEvidence:
    """Classify a fixed point by undamped Picard runs from ``eta* + epsilon d``.

    ``asymptotically_stable`` when every probe returns within
    ``return_factor * epsilon``; ``unstable`` when any probe's excursion exceeds
    ``escape_factor * epsilon``; ``stable`` otherwise.
    """
    br = best_reply or BestReplyConfig()
    star = eta_samples_of(eta_star, spec.grid, spec.kernels.count)
    new, _, _, _ = best_reply_batch(star[None], spec, br)
    fp_res = float(np.max(np.abs(new[0] - star)))
    if not fp_res < verify_tol:
        raise PreconditionError(f"not a verified fixed point: |Phi(eta) - eta| = {fp_res:.3e} >= {verify_tol:.1e}")
    if directions is None:
        directions = probe_directions(spec.grid, n_probes, spec.kernels.count, seed)
    etas = star[None] + epsilon * directions
    B = len(etas)
    exc = np.max(np.abs(etas - star), axis=(1, 2))
    dist = exc.copy()
    iters = np.zeros(B, dtype=int)
    active = np.ones(B, dtype=bool)
    warm = [None] * B
    for it in range(1, max_iter + 1):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        new, _, sols, _ = best_reply_batch(etas[idx], spec, br, [warm[b] for b in idx], iteration=it)
        for j, b in enumerate(idx):
            warm[b] = [np.array([c.terminal for c in s.candidates]) for s in sols[j]]
            etas[b] = new[j]
            d = float(np.max(np.abs(new[j] - star)))
            dist[b] = d
            exc[b] = max(exc[b], d)
            iters[b] = it
            if d < return_factor * epsilon or exc[b] > escape_factor * epsilon:
                active[b] = False
    if np.any(exc > escape_factor * epsilon):
        label = "unstable"
    elif np.all(dist < return_factor * epsilon):
        label = "asymptotically_stable"
    else:
        label = "stable"
    return StabilityEvidence(label, epsilon, exc.tolist(), dist.tolist(), iters.tolist(), fp_res, seed,
                             (return_factor, escape_factor))
