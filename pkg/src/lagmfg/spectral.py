"""Linear stability of fixed points: finite-difference Jacobian of the discretized
best-reply map, its spectrum, and closed-form spectra of the barycenter model."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .best_reply import BestReplyConfig, best_reply_batch
from .errors import BestReplyError, PreconditionError
from .model import GameSpec
from .pmp import eta_samples_of


def jacobian_dphi(eta_star, spec: GameSpec, fd_step: float | None = None, best_reply: BestReplyConfig | None = None,
                  verify_tol: float | None = 1e-6, chunk: int = 512) -> np.ndarray:
    """Central-difference Jacobian of the map on grid samples, shape ``((K+1) N, (K+1) N)``.

    Samples are flattened row-major (time index major, moment index minor).
    Column ``j`` is ``[Phi(eta + h e_j) - Phi(eta - h e_j)] / 2h`` with
    ``h = 1e-5 (1 + |eta|_inf)`` by default.  All perturbed paths are evaluated
    in batches warm-started from the roots at ``eta*``.
    """
    br = best_reply or BestReplyConfig()
    star = eta_samples_of(eta_star, spec.grid, spec.kernels.count)
    shape = star.shape
    D = star.size
    h = fd_step if fd_step is not None else 1e-5 * (1.0 + float(np.max(np.abs(star))))
    base, _, sols, _ = best_reply_batch(star[None], spec, br)
    if verify_tol is not None:
        res = float(np.max(np.abs(base[0] - star)))
        if not res < verify_tol:
            raise PreconditionError(f"not a verified fixed point: residual {res:.3e}")
    warm_row = [np.array([c.terminal for c in s.candidates]) for s in sols[0]]
    J = np.empty((D, D))
    for start in range(0, D, chunk):
        cols = np.arange(start, min(D, start + chunk))
        pert = np.repeat(star.reshape(1, D), 2 * len(cols), axis=0)
        pert[np.arange(len(cols)), cols] += h
        pert[len(cols) + np.arange(len(cols)), cols] -= h
        try:
            out, _, _, _ = best_reply_batch(pert.reshape((-1,) + shape), spec, br, [warm_row] * len(pert))
        except BestReplyError as err:
            raise BestReplyError(f"best reply failed while differentiating columns {cols[0]}..{cols[-1]}: {err}",
                                 player=err.player) from err
        out = out.reshape(2 * len(cols), D)
        J[:, cols] = ((out[:len(cols)] - out[len(cols):]) / (2.0 * h)).T
    return J


@dataclass
class SpectrumReport:
    """Eigenvalues of the discretized differential, sorted by modulus (descending)."""

    size: int
    eigenvalues: np.ndarray
    spectral_radius: float
    distance_to_one: float
    leading_vector: np.ndarray
    classification: str | None = None
    consistent: bool | None = None
    meta: dict = field(default_factory=dict)

    def top(self, k: int) -> np.ndarray:
        return self.eigenvalues[:k]

    def to_dict(self, top: int = 20) -> dict:
        ev = self.eigenvalues[:top]
        return dict(size=self.size, spectral_radius=self.spectral_radius, distance_to_one=self.distance_to_one,
                    eigenvalues=[[float(z.real), float(z.imag)] for z in ev], classification=self.classification,
                    consistent=self.consistent, **self.meta)


def spectrum_of(J: np.ndarray, classification: str | None = None) -> SpectrumReport:
    """Dense nonsymmetric eigensolve (LAPACK Hessenberg reduction + shifted QR)."""
    vals, vecs = np.linalg.eig(J)
    order = np.lexsort((-vals.real, -np.abs(vals)))
    vals, vecs = vals[order], vecs[:, order]
    rho = float(np.abs(vals[0])) if len(vals) else 0.0
    dist = float(np.min(np.abs(vals - 1.0))) if len(vals) else math.inf
    consistent = None
    if classification is not None:
        # rho > 1 should mean an unstable classification, rho < 1 a stable one
        if rho > 1.0 + 1e-3:
            consistent = classification == "unstable"
        elif rho < 1.0 - 1e-3:
            consistent = classification != "unstable"
    lead = vecs[:, 0] if len(vals) else np.zeros(0)
    if lead.size:
        lead = lead * np.exp(-1j * np.angle(lead[np.argmax(np.abs(lead))]))
        lead = lead / np.linalg.norm(lead)
    return SpectrumReport(J.shape[0], vals, rho, dist, lead, classification, consistent)


def compute_spectrum(eta_star, spec: GameSpec, fd_step: float | None = None,
                     best_reply: BestReplyConfig | None = None, classification: str | None = None) -> SpectrumReport:
    J = jacobian_dphi(eta_star, spec, fd_step, best_reply)
    rep = spectrum_of(J, classification)
    rep.meta["K"] = spec.grid.steps
    return rep


# ---------------------------------------------------------------------------
# closed-form spectrum of the barycenter model


@dataclass
class AnalyticSpectrum:
    kappa: float
    T: float
    eigenvalues: np.ndarray
    resonance: bool
    resonant_index: int | None

    def eigenfunction(self, n: int, t) -> np.ndarray:
        """``Y_n(t) = sin((2n - 1) pi t / (2T))``."""
        return np.sin((2 * n - 1) * math.pi * np.asarray(t, dtype=float) / (2.0 * self.T))


def analytic_spectrum_barycenter(kappa: float, T: float, n_max: int = 5, rtol: float = 1e-12) -> AnalyticSpectrum:
    """``lambda_n = kappa / (kappa + (2n-1)^2 pi^2 / (4 T^2) - 1)`` for n = 1..n_max.

    ``resonance`` is raised when ``T = (2n - 1) pi / 2`` for some n (then
    ``lambda_n = 1``).
    """
    if not kappa > 1.0:
        raise ValueError("kappa must exceed 1")
    if not T > 0.0:
        raise ValueError("T must be positive")
    n = np.arange(1, n_max + 1)
    lam = kappa / (kappa + (2 * n - 1) ** 2 * math.pi ** 2 / (4.0 * T * T) - 1.0)
    m = int(round(T / math.pi + 0.5))
    resonant = m >= 1 and abs(T - (2 * m - 1) * math.pi / 2.0) <= rtol * max(1.0, T)
    return AnalyticSpectrum(kappa, T, lam, bool(resonant), m if resonant else None)


# ---------------------------------------------------------------------------
# eigenvalue scan for the linearized boundary value problem at y1


@dataclass
class BVPScanResult:
    eigenvalues: np.ndarray
    brackets: list
    near_tangent: list
    gamma_grid: np.ndarray
    mismatch: np.ndarray


def _bvp_mismatch(gammas: np.ndarray, coef_fn, T: float, steps: int) -> np.ndarray:
    """``ydot(T)`` for ``y'' = [kappa (1 - 1/gamma) + V(t)] y``, ``y(0)=0, ydot(0)=1`` (batched)."""
    s = 1.0 / gammas
    h = T / steps
    y = np.zeros_like(gammas)
    v = np.ones_like(gammas)
    a0, ak = coef_fn
    pv = ak(np.arange(2 * steps + 1) * (0.5 * h))
    base = a0 * (1.0 - s)
    for k in range(steps):
        c1 = base + pv[2 * k]
        c2 = base + pv[2 * k + 1]
        c3 = c2
        c4 = base + pv[2 * k + 2]
        k1y, k1v = v, c1 * y
        k2y, k2v = v + 0.5 * h * k1v, c2 * (y + 0.5 * h * k1y)
        k3y, k3v = v + 0.5 * h * k2v, c3 * (y + 0.5 * h * k2y)
        k4y, k4v = v + h * k3v, c4 * (y + h * k3y)
        y = y + h / 6.0 * (k1y + 2 * k2y + 2 * k3y + k4y)
        v = v + h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
    return v


def eigen_bvp_scan(y1_t, y1_values, kappa: float, gamma_range=(-4.0, 4.0), resolution: int = 4000,
                   exclude: float = 1e-3, steps: int = 2000, bisect_tol: float = 1e-10) -> BVPScanResult:
    """Eigenvalues ``gamma`` of the linearized map at ``y1`` from the boundary mismatch.

    The potential ``(3 y1^2 - 1) / (1 + y1^2)^3`` is built from a cubic spline of
    the samples.  ``gamma`` enters only through ``s = 1/gamma``, so each sign
    branch of ``gamma_range`` (minus ``|gamma| <= exclude``) is sampled uniformly
    in ``s`` with ``resolution`` points.  Sign changes of ``ydot(T)`` are refined
    by bisection; local minima of ``|ydot(T)|`` with no sign change are flagged
    as near-tangent.
    """
    t = np.asarray(y1_t, dtype=float)
    T = float(t[-1])
    spline = CubicSpline(t, np.asarray(y1_values, dtype=float))

    def potential(tt):
        y = spline(tt)
        return (3.0 * y * y - 1.0) / (1.0 + y * y) ** 3

    coef = (kappa, potential)
    lo, hi = gamma_range
    branches = []
    if hi > exclude:
        branches.append((1.0 / hi, 1.0 / max(lo, exclude)))
    if lo < -exclude:
        top = min(hi, -exclude)
        branches.append((1.0 / top, 1.0 / lo))
    gammas_all, mism_all = [], []
    roots, brackets, tangent = [], [], []
    for s_lo, s_hi in branches:
        s = np.linspace(min(s_lo, s_hi), max(s_lo, s_hi), resolution)
        s = s[s != 0.0]
        g = 1.0 / s
        m = _bvp_mismatch(g, coef, T, steps)
        gammas_all.append(g)
        mism_all.append(m)
        sign_change = np.nonzero(np.sign(m[:-1]) * np.sign(m[1:]) < 0)[0]
        if sign_change.size:
            a = s[sign_change].copy()
            b = s[sign_change + 1].copy()
            fa = m[sign_change].copy()
            while np.max(np.abs(1.0 / a - 1.0 / b)) > bisect_tol:
                mid = 0.5 * (a + b)
                fm = _bvp_mismatch(1.0 / mid, coef, T, steps)
                left = np.sign(fm) == np.sign(fa)
                a = np.where(left, mid, a)
                fa = np.where(left, fm, fa)
                b = np.where(left, b, mid)
            for ai, bi in zip(a, b):
                roots.append(1.0 / (0.5 * (ai + bi)))
                brackets.append((1.0 / bi, 1.0 / ai))
        am = np.abs(m)
        for i in range(1, len(m) - 1):
            if am[i] < am[i - 1] and am[i] < am[i + 1] and np.sign(m[i - 1]) == np.sign(m[i + 1]) == np.sign(m[i]):
                if am[i] < 1e-2 * max(am[i - 1], am[i + 1]):
                    tangent.append(float(g[i]))
    order = np.argsort(roots)[::-1]
    return BVPScanResult(np.array(roots)[order], [brackets[i] for i in order], tangent,
                         np.concatenate(gammas_all) if gammas_all else np.zeros(0),
                         np.concatenate(mism_all) if mism_all else np.zeros(0))
