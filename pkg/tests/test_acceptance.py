"""Acceptance criteria, one test each.  Every test records a PASS/FAIL line that the
terminal summary prints in order; the assertions use the criterion tolerances as stated."""

from __future__ import annotations

import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE
from lagmfg.best_reply import apply_best_reply, multiplicity_scan
from lagmfg.cli import DERIVATIVE_GAMES, main
from lagmfg.fixed_point import classify_stability, picard_iterate
from lagmfg.games import (agreement_suite, build_example, double_well_game, integrator_dynamics,
                          no_solution_certificates, phi1, phi2, quadratic_control_cost, radial_map, rotation_game,
                          rotation_initial_path, solve_el_monotone, target_game, two_well_fixed_points,
                          two_well_game)
from lagmfg.model import ControlProblem, MomentPath, TerminalCost, TimeGrid, check_derivatives
from lagmfg.oracle import solve_direct
from lagmfg.pmp import ShootingConfig, integrate_pmp_backward, shoot, solve_ocp
from lagmfg.spectral import analytic_spectrum_barycenter, compute_spectrum, eigen_bvp_scan
from lagmfg.structural import probe_structural_stability


def record(n: int, parts: dict, elapsed: float, limit: float) -> bool:
    parts = dict(parts, runtime=elapsed <= limit)
    ok = all(parts.values())
    failed = [k for k, v in parts.items() if not v]
    detail = "all checks" if ok else "failed: " + ", ".join(failed)
    ACCEPTANCE.append(f"CRITERION {n}: {'PASS' if ok else 'FAIL'} ({detail}; {elapsed:.1f}s of {limit:.0f}s)")
    return ok


def test_criterion_1_analytic_spectrum():
    t0 = time.perf_counter()
    spec = two_well_game(2.0, 2.0, 200)
    rep = compute_spectrum(spec.zero_path(), spec)
    an = analytic_spectrum_barycenter(2.0, 2.0, 3)
    err = np.abs(rep.eigenvalues[:3] - an.eigenvalues)
    parts = {"top3_within_1e-3": bool(np.max(err) < 1e-3),
             "lambda1_near_1.23714": abs(rep.eigenvalues[0].real - 1.23714) < 1e-3}
    assert record(1, parts, time.perf_counter() - t0, 120), (err, rep.eigenvalues[:3])


def test_criterion_2_three_solutions(two_well_T3, y1_discrete):
    t0 = time.perf_counter()
    spec = two_well_T3
    zero = apply_best_reply(spec.zero_path(), spec)
    minus = picard_iterate(-two_well_fixed_points(2.0, 3.0, 200)["y1"][:, None], spec, tol=1e-10,
                           adaptive=False, keep_history=False)
    mono = solve_el_monotone(3.0, K=1000)
    y1 = y1_discrete.values[:, 0]
    parts = {
        "zero_fixed": float(np.max(np.abs(zero.eta.values))) < 1e-10,
        "minus_y1_fixed": minus.converged,
        "minus_y1_is_mirror": float(np.max(np.abs(minus.eta_star.values[:, 0] + y1))) < 1e-8,
        "three_distinct": float(np.min(np.abs(y1[1:]))) > 0 and abs(y1[-1] - mono.M) < 1e-3,
        "y1_strictly_increasing": bool(np.min(np.diff(y1)) > 0) and mono.strictly_increasing,
        "turning_point_residual_1e-8": mono.residual < 1e-8,
        "M_at_least_sqrt_3.5": mono.M >= math.sqrt(3.5),
        "energy_drift_1e-8": mono.energy_drift < 1e-8,
    }
    ok = record(2, parts, time.perf_counter() - t0, 60)
    # M = 1.12834 at T = 3 while sqrt(3.5) = 1.87083: the lower bound is not attainable (see the ledger)
    assert ok, dict(parts, M=mono.M)


def test_criterion_3_stability_classification(two_well_T3, y1_discrete):
    t0 = time.perf_counter()
    spec = two_well_T3
    zero = classify_stability(spec.zero_path(), spec, seed=0)
    plus = classify_stability(y1_discrete, spec, seed=0)
    minus = classify_stability(MomentPath(spec.grid, -y1_discrete.values), spec, seed=0)
    mono = solve_el_monotone(3.0, K=200)
    scan = eigen_bvp_scan(mono.t, mono.y, 2.0, (-4.0, 4.0))
    ev = scan.eigenvalues
    parts = {
        "zero_unstable": zero.classification == "unstable",
        "y1_asymptotically_stable": plus.classification == "asymptotically_stable",
        "minus_y1_asymptotically_stable": minus.classification == "asymptotically_stable",
        "bvp_eigenvalues_found": len(ev) > 0,
        "bvp_eigenvalues_in_(0,1)": bool(np.all((ev > 0) & (ev < 1))),
        "margin_to_1_above_1e-3": bool(1.0 - np.max(ev) > 1e-3),
        "no_near_tangent": not scan.near_tangent,
    }
    assert record(3, parts, time.perf_counter() - t0, 300), (parts, ev[:5])


def test_criterion_4_rotation_dynamics():
    t0 = time.perf_counter()
    parts = {}
    for variant, r0, iters, name in (("phi1_unstable", 0.05, 30, "unstable"), ("phi2_stable", 0.5, 200, "stable")):
        spec = rotation_game(variant, K=20)
        run = picard_iterate(rotation_initial_path(spec.grid, r0), spec, tol=1e-14, max_iter=iters, adaptive=False)
        radii = np.array([np.linalg.norm(p.values[-1]) for p in run.history])
        ref_map = (lambda x: phi1(x, math.pi / 3)) if variant == "phi1_unstable" else phi2
        step_err = max(float(np.max(np.abs(run.history[k + 1].values[-1] - ref_map(run.history[k].values[-1]))))
                       for k in range(run.iterations))
        radial_err = float(np.max(np.abs(radii[1:] - radial_map(radii[:-1], variant))))
        parts[f"{name}_matches_map_1e-8"] = step_err < 1e-8 and radial_err < 1e-8
        if name == "unstable":
            parts["unstable_exceeds_0.9_in_30"] = bool(np.any(radii[1:31] > 0.9))
        else:
            parts["stable_below_0.05_in_200"] = bool(np.any(radii[1:201] < 0.05))
    assert record(4, parts, time.perf_counter() - t0, 60), parts


def test_criterion_5_oracle_equivalence():
    t0 = time.perf_counter()
    parts = {}
    for name, problem, xbar, eta in agreement_suite(100):
        sol = solve_ocp(xbar, problem, eta)
        direct = solve_direct(xbar, problem, eta, starts=64, seed=0)
        rel = abs(sol.min_cost - direct.cost) / max(1.0, abs(direct.cost))
        term = min(float(np.max(np.abs(direct.terminal - y))) for y in sol.optimal_terminals)
        parts[f"{name}_cost_rel_1e-3"] = rel <= 1e-3
        parts[f"{name}_terminal_1e-2"] = term <= 1e-2
    assert record(5, parts, time.perf_counter() - t0, 300), parts


def test_criterion_6_nonexistence_certificates():
    t0 = time.perf_counter()
    kern = no_solution_certificates("kernel")
    term = no_solution_certificates("terminal_constraint")
    kv = kern.values
    parts = {
        "kernel_tie_mass_1": kv["tie_mass"] == pytest.approx(1.0, abs=1e-12),
        "kernel_gram_psd": kv["gram_min_eigenvalue"] > -1e-12,
        "kernel_pure_costs_equal_1e-12": kv["pure_cost_gap"] <= 1e-12,
        "kernel_mixture_barycenter_zero": kern.checks["mixture_barycenter_zero"],
        "kernel_all_checks": kern.passed,
        "terminal_zero_reply_cost_-T": term.values["zero_reply_cost"] == -term.values["T"],
        "terminal_nonzero_reply_is_zero": term.checks["nonzero_reply_is_zero"],
        "terminal_two_cycle": term.checks["two_cycle"],
        "terminal_no_fixed_point": term.checks["no_fixed_point"],
    }
    assert record(6, parts, time.perf_counter() - t0, 60), parts


def test_criterion_7_multiplicity_scan():
    t0 = time.perf_counter()
    grids = (101, 201, 401)
    plain = double_well_game(0.0, 1.0, 100)
    tilted = build_example("tilted_double_well", K=100).spec
    m = [multiplicity_scan(plain, np.linspace(-2, 2, n), 10.0).measure for n in grids]
    mt = [multiplicity_scan(tilted, np.linspace(-2, 2, n), 10.0).measure for n in grids]
    parts = {
        "double_well_decreasing": all(b < a for a, b in zip(m, m[1:])),
        "double_well_below_0.02_at_401": m[-1] < 0.02,
        "tilted_measure_zero": all(v == 0.0 for v in mt),
    }
    ok = record(7, parts, time.perf_counter() - t0, 180)
    # with tilt 0.1 the two wells tie exactly at xbar = 0.05, a node of the 401 grid (see the ledger)
    assert ok, dict(parts, measures=m, tilted=mt)


def _structural_parts(prefix, rep):
    return {f"{prefix}_all_converged": rep.all_converged,
            f"{prefix}_decreasing": rep.decreasing,
            f"{prefix}_slope_at_least_0.6": rep.slope is not None and rep.slope >= 0.6}


def test_criterion_8_structural_stability(two_well_T3, y1_discrete):
    t0 = time.perf_counter()
    deltas = [1e-1, 1e-2, 1e-3]
    syn = build_example("synthesized", kappa=50.0, K=100)
    base = MomentPath(syn.spec.grid, syn.reference["x_star"])
    parts = _structural_parts("synthesized", probe_structural_stability(syn.spec, base, deltas, target="L"))
    for sign, name in ((1, "y1"), (-1, "minus_y1")):
        star = MomentPath(two_well_T3.grid, sign * y1_discrete.values)
        parts.update(_structural_parts(name, probe_structural_stability(two_well_T3, star, deltas, target="psi")))
    assert record(8, parts, time.perf_counter() - t0, 600), parts


def _rk4_orders():
    # xdot = u, L = u^2 + x^2 has x = xbar cosh(T - t) / cosh T; shoot back from the exact terminal point
    xbar, T = 1.0, 1.5
    run = quadratic_control_cost(1, lambda t, x, e: x[..., 0] ** 2, lambda t, x, e: 2 * x)
    term = TerminalCost(lambda x, e: np.zeros(np.shape(x)[:-1]), lambda x, e: np.zeros(np.shape(x)))
    errs = []
    for K in (10, 20, 40, 80):
        problem = ControlProblem(integrator_dynamics(1), run, term, TimeGrid(T, K))
        traj = integrate_pmp_backward(np.array([xbar / math.cosh(T)]), problem)
        errs.append(abs(traj.states[0, 0] - xbar))
    return [math.log2(a / b) for a, b in zip(errs, errs[1:])]


def _affine_error():
    # the closed-form target trajectory x = c t / (1 + T) is affine, so RK4 reproduces it exactly
    worst = 0.0
    for K in (5, 20, 80):
        spec = target_game(c=1.0, T=1.0, K=K)
        traj = shoot(np.zeros(1), spec.problem, None, ShootingConfig(box_radius=3.0))[0]
        worst = max(worst, float(np.max(np.abs(traj.states[:, 0] - spec.grid.nodes / 2.0))))
    return worst


def test_criterion_9_numerical_hygiene(tmp_path):
    t0 = time.perf_counter()
    parts = {}
    for name in DERIVATIVE_GAMES:
        spec = build_example(name, K=20 if name != "synthesized" else 50).spec
        parts[f"derivatives_{name}"] = check_derivatives(spec, tol=1e-4).passed
    orders = _rk4_orders()
    parts["rk4_order_4"] = all(3.8 < p < 4.2 for p in orders)
    parts["rk4_exact_on_affine"] = _affine_error() < 1e-12
    spec = two_well_game(2.0, 3.0, 60)
    a = classify_stability(spec.zero_path(), spec, seed=7, n_probes=3, max_iter=30)
    b = classify_stability(spec.zero_path(), spec, seed=7, n_probes=3, max_iter=30)
    parts["seeded_probes_identical"] = a.to_dict() == b.to_dict()
    out = tmp_path / "rerun"
    args = ["demo", "rotation_unstable", "--out", str(out)]
    main(args)
    first = {p.name: p.read_bytes() for p in out.iterdir()}
    main(args)
    parts["cli_rerun_bit_identical"] = {p.name: p.read_bytes() for p in out.iterdir()} == first
    assert record(9, parts, time.perf_counter() - t0, 600), parts
