from __future__ import annotations

import math
from dataclasses import replace

import numpy as np
import pytest

from lagmfg.errors import BestReplyError, PreconditionError
from lagmfg.fixed_point import (PicardConfig, classify_stability, picard_batch, picard_iterate,
                                probe_directions)
from lagmfg.games import (build_example, radial_map, rotation_game, rotation_initial_path, target_game)
from lagmfg.model import MomentPath, TerminalCost


def _radii(run):
    return [float(np.linalg.norm(p.values[-1])) for p in run.history]


def test_rotation_stable_radius_after_200():
    spec = rotation_game("phi2_stable", K=20)
    run = picard_iterate(rotation_initial_path(spec.grid, 0.5), spec, tol=1e-14, max_iter=200, adaptive=False)
    r = _radii(run)
    assert run.outcome == "max_iter" and run.iterations == 200
    ref = [0.5]
    for _ in range(200):
        ref.append(float(radial_map(ref[-1], "phi2_stable")))
    assert np.max(np.abs(np.array(r) - ref)) < 1e-8
    assert r[-1] == pytest.approx(0.0497, abs=2e-4)
    assert r[-1] == pytest.approx(1.0 / math.sqrt(400 + 1 / 0.25), rel=2e-2)
    assert all(b < a for a, b in zip(run.residuals, run.residuals[1:]))


def test_rotation_unstable_escapes_to_unit_circle():
    spec = rotation_game("phi1_unstable", K=20)
    run = picard_iterate(rotation_initial_path(spec.grid, 0.05), spec, tol=1e-14, max_iter=30, adaptive=False)
    r = _radii(run)
    first = next(k for k, v in enumerate(r) if v > 0.9)
    assert first <= 30
    assert r[-1] == pytest.approx(1.0, abs=1e-6)


def test_exact_fixed_point_converges_in_one_step():
    for variant in ("phi1_unstable", "phi2_stable"):
        spec = rotation_game(variant, K=20)
        run = picard_iterate(spec.zero_path(), spec)
        assert run.converged and run.iterations == 1 and run.residuals == [0.0]


def test_constant_map_converges_immediately():
    spec = build_example("constant_toy").spec
    run = picard_iterate(spec.zero_path(), spec, tol=1e-12)
    assert run.converged and run.iterations == 2 and run.residuals[-1] < 1e-12


def test_run_invariants():
    spec = rotation_game("phi2_stable", K=20)
    run = picard_iterate(rotation_initial_path(spec.grid, 0.5), spec, tol=1e-3, max_iter=100)
    assert len(run.residuals) == run.iterations == len(run.history) - 1
    assert run.converged == (run.residuals[-1] < run.tol)
    d = run.to_dict()
    assert d["outcome"] == run.outcome and len(d["residuals"]) == run.iterations


@pytest.mark.parametrize("kw", [dict(tol=0.0), dict(damping=0.0), dict(damping=1.5)])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        PicardConfig(**kw)


def _expanding_game():
    # the target is 4 b(T) (1 + T) / T, so every best reply multiplies b(T) by 4
    spec = target_game(c=0.0, T=1.0, K=10)
    term = TerminalCost(lambda x, e: np.sum((x - 8.0 * e) ** 2, axis=-1),
                        lambda x, e: 2.0 * (x - 8.0 * e))
    return replace(spec, terminal=term, reach_radius=None)


def test_divergence_detected():
    spec = _expanding_game()
    run = picard_iterate(MomentPath.constant(spec.grid, 0.01), spec, max_iter=50, gamma0=1.0)
    assert run.outcome == "diverged"
    assert np.max(np.abs(run.eta_star.values)) > 10.0


def test_best_reply_error_carries_iteration():
    spec = target_game(c=0.0, T=1.0, K=10, xbar=1.0)
    spec = replace(spec, terminal=TerminalCost(lambda x, e: -x[..., 0] ** 2, lambda x, e: -2.0 * x), flow=None)
    with pytest.raises(BestReplyError) as info:
        picard_iterate(spec.zero_path(), spec)
    assert info.value.iteration == 1


def test_batch_rows_independent():
    spec = rotation_game("phi2_stable", K=20)
    etas = np.stack([rotation_initial_path(spec.grid, r) for r in (0.0, 0.3)])
    runs = picard_batch(etas, spec, PicardConfig(tol=1e-6, max_iter=5, adaptive=False))
    assert runs[0].converged and runs[0].iterations == 1
    single = picard_iterate(etas[1], spec, tol=1e-6, max_iter=5, adaptive=False)
    assert np.array_equal(runs[1].eta_star.values, single.eta_star.values)


def test_damped_and_undamped_agree_on_y1(two_well_T3, y1_discrete):
    start = y1_discrete.values + 0.01
    a = picard_iterate(start, two_well_T3, tol=1e-10, adaptive=False, keep_history=False)
    b = picard_iterate(start, two_well_T3, tol=1e-10, damping=0.5, adaptive=False, keep_history=False)
    assert a.converged and b.converged
    assert a.eta_star.distance(b.eta_star) < 1e-8


def test_probe_directions_unit_sup_norm_and_seeded():
    spec = rotation_game(K=20)
    d1 = probe_directions(spec.grid, 4, 2, seed=7)
    d2 = probe_directions(spec.grid, 4, 2, seed=7)
    assert np.array_equal(d1, d2)
    assert np.allclose(np.max(np.abs(d1), axis=(1, 2)), 1.0)


def test_classification_requires_fixed_point(two_well_T3):
    with pytest.raises(PreconditionError):
        classify_stability(MomentPath.constant(two_well_T3.grid, 0.3), two_well_T3)


def test_classification_invariant_to_probe_count_and_order(two_well_T3, y1_discrete):
    d16 = probe_directions(two_well_T3.grid, 16, 1, seed=0)
    a = classify_stability(y1_discrete, two_well_T3, directions=d16[:8])
    b = classify_stability(y1_discrete, two_well_T3, directions=d16[::-1])
    assert a.classification == b.classification == "asymptotically_stable"


def test_rotation_stable_origin_probes_decay_slowly():
    spec = rotation_game("phi2_stable", K=20)
    short = classify_stability(spec.zero_path(), spec, epsilon=1e-2, n_probes=4, max_iter=20)
    assert short.classification == "stable"
    long = classify_stability(spec.zero_path(), spec, epsilon=1e-2, n_probes=4, max_iter=20000,
                              return_factor=0.5)
    assert long.classification == "asymptotically_stable"
