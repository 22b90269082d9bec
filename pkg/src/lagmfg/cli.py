"""Command-line drivers.

Every subcommand resolves an :class:`ExperimentConfig` (defaults, then
``--config``, then ``LAGMFG_*`` variables, then ``--param``/flags), writes its
artifacts under ``--out`` with the resolved config echoed in a header, and
returns an exit code: 0 success/converged, 2 diverged, 3 iteration cap,
1 error or failed check.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .best_reply import BestReplyConfig, multiplicity_scan
from .config import ExperimentConfig, apply_overrides
from .errors import LagMFGError
from .fixed_point import CONVERGED, DIVERGED, MAX_ITER, PicardConfig, classify_stability, picard_batch
from .games import (EXAMPLES, build_example, no_solution_certificates, radial_map, rotation_initial_path,
                    two_well_fixed_points, agreement_suite)
from .model import check_derivatives
from .oracle import solve_direct
from .pmp import solve_ocp
from .spectral import analytic_spectrum_barycenter, compute_spectrum
from .structural import probe_structural_stability

log = logging.getLogger("lagmfg")

EXIT = {CONVERGED: 0, DIVERGED: 2, MAX_ITER: 3}

DEMOS = {
    "two_well": dict(game="two_well", params=dict(kappa=2.0, T=3.0), grid=200, tol=1e-10, adaptive=False,
                     initial=dict(kind="y1", sign=1, offset=0.01)),
    "two_well_zero": dict(game="two_well", params=dict(kappa=2.0, T=3.0), grid=200, tol=1e-10, adaptive=False,
                          initial=dict(kind="constant", value=0.01)),
    "rotation_unstable": dict(game="rotation", params=dict(variant="phi1_unstable"), grid=20, tol=1e-12,
                              max_iter=30, adaptive=False, initial=dict(kind="radius", r0=0.05)),
    "rotation_stable": dict(game="rotation", params=dict(variant="phi2_stable"), grid=20, tol=1e-12,
                            max_iter=200, adaptive=False, initial=dict(kind="radius", r0=0.5)),
    "double_well": dict(game="double_well", grid=100, nu=10.0),
    "tilted_double_well": dict(game="tilted_double_well", grid=100, nu=10.0),
    "no_solution_kernel": dict(game="no_solution_kernel"),
    "terminal_constraint": dict(game="terminal_constraint"),
    "synthesized": dict(game="synthesized", params=dict(kappa=50.0, K=100), tol=1e-10, max_iter=3000,
                        adaptive=False, initial=dict(kind="x_star"), bump=dict(target="L", radius=1.0)),
}


# ---------------------------------------------------------------------------
# artifacts


def fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_csv(path: Path, cfg: ExperimentConfig, header: list, rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(cfg.header())
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    if isinstance(v, complex):
        return [v.real, v.imag]
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    return v


def write_json(path: Path, cfg: ExperimentConfig, payload: dict) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    data = dict(config=cfg.to_dict(), **_jsonable(payload))
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    return path


# ---------------------------------------------------------------------------
# helpers


def build(cfg: ExperimentConfig):
    params = dict(cfg.params)
    if cfg.grid is not None:
        params["K"] = cfg.grid
    return build_example(cfg.game, **params)


def initial_samples(cfg: ExperimentConfig, bundle) -> np.ndarray:
    spec = bundle.spec
    K, N = spec.grid.steps, spec.kernels.count
    init = dict(cfg.initial)
    kind = init.get("kind", "zero")
    if kind == "zero":
        return np.zeros((K + 1, N))
    if kind == "constant":
        return np.full((K + 1, N), float(init.get("value", 0.0)))
    if kind == "y1":
        p = spec.params
        y1 = two_well_fixed_points(p["kappa"], p["T"], K)["y1"]
        return (float(init.get("sign", 1)) * y1 + float(init.get("offset", 0.0)))[:, None]
    if kind == "radius":
        return rotation_initial_path(spec.grid, float(init.get("r0", 0.5)), float(init.get("angle", 0.0)))
    if kind == "x_star":
        return np.array(bundle.reference["x_star"], dtype=float) + float(init.get("offset", 0.0))
    raise ValueError(f"unknown initial kind {kind!r}")


def picard_config(cfg: ExperimentConfig) -> PicardConfig:
    return PicardConfig(tol=cfg.tol, max_iter=cfg.max_iter, damping=cfg.damping, adaptive=cfg.adaptive,
                        keep_history=False, best_reply=BestReplyConfig())


def _run_picard(cfg: ExperimentConfig, bundle, eta0=None, record=None):
    spec = bundle.spec
    eta0 = initial_samples(cfg, bundle) if eta0 is None else eta0

    def cb(it, etas, active):
        if record is not None:
            record.append(etas[0].copy())

    return picard_batch(eta0[None], spec, picard_config(cfg), callback=cb)[0]


# ---------------------------------------------------------------------------
# drivers


def run_fixed_point(cfg: ExperimentConfig, classify: bool = False):
    """Picard run; residual CSV, final iterate CSV, JSON summary."""
    bundle = build(cfg)
    spec = bundle.spec
    out = Path(cfg.out)
    eta0 = initial_samples(cfg, bundle)
    iterates = [eta0.copy()]
    run = _run_picard(cfg, bundle, eta0, iterates)
    rows, map_err = [], []
    variant = spec.params.get("variant") if spec.name == "rotation" else None
    for k, r in enumerate(run.residuals):
        eta = iterates[k + 1]
        row = [k + 1, r, run.damping[k], run.tie_mass[k], float(np.max(np.abs(eta))),
               float(np.linalg.norm(eta[-1]))]
        if variant is not None:
            # oracle: the scalar radial map applied to the previous terminal radius
            ref = float(radial_map(np.linalg.norm(iterates[k][-1]), variant))
            map_err.append(abs(row[-1] - ref))
            row.append(ref)
        rows.append(row)
    header = ["iteration", "residual", "damping", "tie_mass", "sup_norm", "terminal_norm"]
    if variant is not None:
        header.append("scalar_map_radius")
    write_csv(out / "residuals.csv", cfg, header, rows)
    final = run.eta_star.values
    write_csv(out / "eta_star.csv", cfg, ["t"] + [f"eta{i}" for i in range(final.shape[1])],
              [[t, *v] for t, v in zip(spec.grid.nodes, final)])
    summary = dict(run.to_dict(), game=spec.name, final_sup_norm=float(np.max(np.abs(final))),
                   terminal_norm=float(np.linalg.norm(final[-1])))
    if map_err:
        summary["scalar_map_max_error"] = float(max(map_err))
    if classify and run.converged:
        ev = classify_stability(run.eta_star, spec, cfg.epsilon, cfg.probes, cfg.seed, cfg.probe_iter)
        summary["stability"] = ev.to_dict()
    write_json(out / "summary.json", cfg, summary)
    return EXIT[run.outcome], summary


def run_spectrum(cfg: ExperimentConfig):
    """Fixed point from the configured start, then its Jacobian spectrum and analytic comparison."""
    bundle = build(cfg)
    spec = bundle.spec
    out = Path(cfg.out)
    run = _run_picard(cfg, bundle)
    if not run.converged:
        raise LagMFGError(f"fixed point not found ({run.outcome}); spectrum needs a verified fixed point")
    rep = compute_spectrum(run.eta_star, spec, cfg.fd_step)
    summary = dict(rep.to_dict(), game=spec.name, picard_iterations=run.iterations)
    rows = []
    if spec.name == "two_well" and float(np.max(np.abs(run.eta_star.values))) < 1e-6:
        ana = analytic_spectrum_barycenter(spec.params["kappa"], spec.params["T"], cfg.n_analytic)
        summary["resonance"] = ana.resonance
        summary["resonant_index"] = ana.resonant_index
        num = rep.eigenvalues
        for n, lam in enumerate(ana.eigenvalues, start=1):
            z = num[n - 1] if n - 1 < len(num) else complex("nan")
            rows.append([n, float(z.real), float(lam), abs(z - lam)])
        summary["max_error_top3"] = float(max(r[3] for r in rows[:3]))
        write_csv(out / "spectrum_comparison.csv", cfg, ["n", "lambda_num", "lambda_ana", "err"], rows)
    write_csv(out / "eigenvalues.csv", cfg, ["index", "real", "imag", "modulus"],
              [[i, z.real, z.imag, abs(z)] for i, z in enumerate(rep.eigenvalues)])
    write_json(out / "spectrum.json", cfg, summary)
    return 0, summary


def run_multiplicity_scan(cfg: ExperimentConfig):
    """Scan of the tie set over the configured grids; measure series plus flagged points."""
    bundle = build(cfg)
    spec = bundle.spec
    out = Path(cfg.out)
    lo, hi = cfg.scan_range
    series, flagged_rows = [], []
    for npts in cfg.scan_points:
        grid = np.linspace(lo, hi, int(npts))
        rep = multiplicity_scan(spec, grid, cfg.nu)
        series.append([int(npts), rep.measure, int(rep.flagged.sum()), len(rep.failures)])
        flagged_rows += [[int(npts), float(x[0])] for x in rep.flagged_points]
    write_csv(out / "measure.csv", cfg, ["points", "measure", "flagged", "failures"], series)
    write_csv(out / "flagged.csv", cfg, ["points", "xbar"], flagged_rows)
    measures = [s[1] for s in series]
    summary = dict(game=spec.name, nu=cfg.nu, points=list(cfg.scan_points), measures=measures,
                   decreasing=all(b < a for a, b in zip(measures, measures[1:])))
    write_json(out / "multiplicity.json", cfg, summary)
    return 0, summary


def run_probe_stability(cfg: ExperimentConfig):
    """Baseline fixed point, then one perturbed fixed point per delta."""
    bundle = build(cfg)
    spec = bundle.spec
    out = Path(cfg.out)
    base = _run_picard(cfg, bundle)
    if not base.converged:
        raise LagMFGError(f"baseline fixed point not found ({base.outcome})")
    bump = dict(cfg.bump)
    pc = replace(picard_config(cfg), max_iter=max(cfg.max_iter, 2000), adaptive=False)
    rep = probe_structural_stability(spec, base.eta_star, cfg.deltas, bump.get("target", "psi"),
                                     float(bump.get("radius", 1.0)), bump.get("center"), pc)
    write_csv(out / "structural.csv", cfg, ["delta", "distance", "moment_distance", "outcome", "iterations"],
              zip(rep.deltas, rep.distances, rep.moment_distances, rep.outcomes, rep.iterations))
    summary = dict(rep.to_dict(), game=spec.name, baseline_iterations=base.iterations,
                   decreasing=rep.decreasing, all_converged=rep.all_converged)
    write_json(out / "structural.json", cfg, summary)
    return 0, summary


def run_verify(cfg: ExperimentConfig, rel_tol: float = 1e-3, terminal_tol: float = 1e-2):
    """Shooting against direct transcription on the agreement suite."""
    out = Path(cfg.out)
    rows, ok = [], True
    for name, problem, xbar, eta in agreement_suite(cfg.oracle_K):
        sol = solve_ocp(xbar, problem, eta)
        direct = solve_direct(xbar, problem, eta, starts=cfg.oracle_starts, seed=cfg.seed)
        sc, dc = sol.min_cost, direct.cost
        rel = abs(sc - dc) / max(1.0, abs(dc))
        term = float(min(np.max(np.abs(direct.terminal - y)) for y in sol.optimal_terminals))
        passed = rel <= rel_tol and term <= terminal_tol
        ok &= passed
        rows.append([name, sc, dc, rel, term, passed])
    write_csv(out / "verify.csv", cfg, ["problem", "shooting_cost", "direct_cost", "rel_err", "terminal_err",
                                        "passed"], rows)
    summary = dict(problems=[dict(zip(["problem", "shooting_cost", "direct_cost", "rel_err", "terminal_err",
                                       "passed"], r)) for r in rows], passed=ok)
    write_json(out / "verify.json", cfg, summary)
    return (0 if ok else 1), summary


DERIVATIVE_GAMES = ("two_well", "double_well", "tilted_double_well", "target", "rotation", "no_solution_kernel",
                    "synthesized")


def run_check_derivatives(cfg: ExperimentConfig):
    out = Path(cfg.out)
    names = list(DERIVATIVE_GAMES)
    rows, reports, ok = [], {}, True
    for name in names:
        spec = build_example(name, K=20 if name != "synthesized" else 50).spec
        rep = check_derivatives(spec, seed=cfg.seed)
        ok &= rep.passed
        reports[name] = rep.to_dict()
        rows.append([name, rep.passed, max(rep.errors.values()) if rep.errors else 0.0])
    write_csv(out / "derivatives.csv", cfg, ["game", "passed", "max_error"], rows)
    write_json(out / "derivatives.json", cfg, dict(reports=reports, passed=ok))
    return (0 if ok else 1), dict(passed=ok, reports=reports)


def run_certificate(cfg: ExperimentConfig):
    variant = "kernel" if cfg.game == "no_solution_kernel" else "terminal_constraint"
    p = {k: v for k, v in cfg.params.items() if k in ("T", "players", "K")}
    rep = no_solution_certificates(variant, seed=cfg.seed, **p)
    write_json(Path(cfg.out) / "certificate.json", cfg, rep.to_dict())
    return (0 if rep.passed else 1), rep.to_dict()


def demo_config(name: str) -> ExperimentConfig:
    if name not in DEMOS:
        raise ValueError(f"unknown demo {name!r}; choose from {sorted(DEMOS)}")
    return ExperimentConfig.from_dict(dict(ExperimentConfig().to_dict(), **DEMOS[name]))


def run_demo(name: str, base: ExperimentConfig):
    if name in ("no_solution_kernel", "terminal_constraint"):
        return run_certificate(base)
    if name in ("double_well", "tilted_double_well"):
        return run_multiplicity_scan(base)
    if name == "synthesized":
        return run_probe_stability(base)
    return run_fixed_point(base)


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lagmfg", description="Lagrangian mean field game experiments")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int)
    common.add_argument("--grid", type=int, help="number of time steps K")
    common.add_argument("--out", help="output directory")
    common.add_argument("--game", help=f"example name ({', '.join(EXAMPLES)})")
    common.add_argument("--param", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config field or a game parameter (repeatable)")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    demo = sub.add_parser("demo", parents=[common], help="run a named preset")
    demo.add_argument("name", choices=sorted(DEMOS))
    fp = sub.add_parser("fixed-point", parents=[common], help="Picard iteration of the best-reply map")
    fp.add_argument("--classify", action="store_true", help="classify stability after convergence")
    sub.add_parser("spectrum", parents=[common], help="Jacobian spectrum at a fixed point")
    sub.add_parser("scan-multiplicity", parents=[common], help="tie-set measure over initial points")
    sub.add_parser("probe-stability", parents=[common], help="structural perturbation probes")
    sub.add_parser("verify", parents=[common], help="shooting vs direct transcription agreement suite")
    sub.add_parser("check-derivatives", parents=[common], help="finite-difference checks of all games")
    return parser


def resolve_config(args, environ=None) -> ExperimentConfig:
    """Defaults (or a demo preset), then ``--config``, environment, flags, ``--param`` pairs."""
    cfg = demo_config(args.name) if args.command == "demo" else ExperimentConfig()
    if args.config:
        data = json.loads(Path(args.config).read_text())
        cfg = ExperimentConfig.from_dict(dict(cfg.to_dict(), **data))
    cfg = apply_overrides(cfg, [], environ)
    flags = {k: getattr(args, k) for k in ("seed", "grid", "out", "game") if getattr(args, k) is not None}
    if flags:
        cfg = ExperimentConfig.from_dict(dict(cfg.to_dict(), **flags))
    return apply_overrides(cfg, args.param, environ={})


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
        if args.command == "demo":
            code, summary = run_demo(args.name, cfg)
        else:
            driver = {"fixed-point": lambda c: run_fixed_point(c, args.classify), "spectrum": run_spectrum,
                      "scan-multiplicity": run_multiplicity_scan, "probe-stability": run_probe_stability,
                      "verify": run_verify, "check-derivatives": run_check_derivatives}[args.command]
            code, summary = driver(cfg)
    except (LagMFGError, ValueError, OSError, KeyError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    brief = {k: summary[k] for k in ("outcome", "iterations", "passed", "measures", "slope", "spectral_radius")
             if k in summary}
    print(json.dumps(_jsonable(brief)))
    return code


if __name__ == "__main__":
    sys.exit(main())
