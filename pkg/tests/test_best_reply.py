from __future__ import annotations

import math
from dataclasses import replace

import numpy as np
import pytest

from lagmfg.best_reply import SELECTION_RULE, apply_best_reply, best_reply_batch, multiplicity_scan
from lagmfg.errors import BestReplyError
from lagmfg.games import (double_well_game, kernel_game, phi1, phi2, rotation_game, rotation_initial_path,
                          target_game, two_well_game)
from lagmfg.model import MomentPath, PlayerEnsemble, TerminalCost, moment_bound


@pytest.mark.parametrize("r,angle", [(0.05, 0.0), (0.5, 1.0), (0.9, -2.0), (1.7, 3.0)])
def test_rotation_image_matches_map(r, angle):
    theta0 = math.pi / 3
    spec = rotation_game("phi1_unstable", 1.0, theta0, 20)
    eta = rotation_initial_path(spec.grid, r, angle)
    out = apply_best_reply(MomentPath(spec.grid, eta), spec)
    assert np.allclose(out.eta.values[-1], phi1(eta[-1], theta0), atol=1e-8)
    spec2 = rotation_game("phi2_stable", 1.0, theta0, 20)
    out2 = apply_best_reply(MomentPath(spec2.grid, eta), spec2)
    assert np.allclose(out2.eta.values[-1], phi2(eta[-1]), atol=1e-8)
    # all players identical, trajectory linear in t
    assert np.allclose(out.eta.values, np.outer(spec.grid.nodes, out.eta.values[-1]), atol=1e-10)


def test_convex_players_have_no_ties():
    spec = target_game(c=0.4, T=1.0, K=50)
    out = apply_best_reply(spec.zero_path(), spec)
    assert out.tie_mass == 0.0
    assert out.selection_rule == SELECTION_RULE


def test_kernel_game_all_players_tied_at_zero():
    spec = kernel_game(1.0, 20, 20)
    out = apply_best_reply(spec.zero_path(), spec)
    assert out.tie_mass == pytest.approx(1.0, abs=1e-12)
    for sol in out.solutions:
        assert sorted(round(float(sol.candidates[i].terminal[0]), 9) for i in sol.optimal) == [-1.0, 1.0]


def test_tie_mass_invariant_under_reordering():
    spec = kernel_game(1.0, 10, 20)
    ens = spec.ensemble
    perm = np.arange(ens.size)[::-1]
    spec_r = replace(spec, ensemble=PlayerEnsemble(ens.nodes[perm], ens.weights[perm], ens.initial_points[perm]))
    a = apply_best_reply(spec.zero_path(), spec)
    b = apply_best_reply(spec_r.zero_path(), spec_r)
    assert a.tie_mass == b.tie_mass == pytest.approx(1.0)
    assert np.allclose(a.eta.values, b.eta.values, atol=1e-14)


def test_two_well_odd_symmetry():
    spec = two_well_game(2.0, 3.0, 100)
    t = spec.grid.nodes
    for b in (0.4 * np.sin(t), 0.2 * t - 0.05 * t * t, np.full_like(t, 0.3)):
        plus, _, _, _ = best_reply_batch(b[None, :, None], spec)
        minus, _, _, _ = best_reply_batch(-b[None, :, None], spec)
        assert np.max(np.abs(plus + minus)) < 1e-9


def test_best_reply_deterministic():
    spec = two_well_game(2.0, 3.0, 60)
    b = 0.5 * np.sin(spec.grid.nodes)[:, None]
    a = apply_best_reply(MomentPath(spec.grid, b), spec).eta.values
    c = apply_best_reply(MomentPath(spec.grid, b), spec).eta.values
    assert np.array_equal(a, c)


def test_moment_bound_respected():
    spec = rotation_game("phi1_unstable", 1.0, math.pi / 3, 20)
    gamma0 = moment_bound(spec, step=0.05)
    for r in (0.1, 1.0, 3.0):
        out = apply_best_reply(MomentPath(spec.grid, rotation_initial_path(spec.grid, r)), spec)
        assert np.max(np.linalg.norm(out.eta.values, axis=1)) <= gamma0


def test_batch_matches_single_and_warm_roots():
    spec = double_well_game(0.3, 1.0, 50)
    out = apply_best_reply(spec.zero_path(), spec)
    warm = out.warm_roots()
    again = apply_best_reply(spec.zero_path(), spec, warm=warm)
    assert np.array_equal(out.eta.values, again.eta.values)
    states = out.selected_states()
    assert states.shape == (1, 51, 1)
    assert out.player_solution(0) is out.solutions[0]


def test_player_failure_reports_index():
    spec = target_game(c=0.0, T=1.0, K=20, xbar=1.0)
    bad = TerminalCost(lambda x, e: -x[..., 0] ** 2, lambda x, e: -2.0 * x)
    spec = replace(spec, terminal=bad, flow=None)
    with pytest.raises(BestReplyError) as info:
        apply_best_reply(spec.zero_path(), spec)
    assert info.value.player == 0


def test_eta_shape_validated():
    spec = target_game(K=20)
    with pytest.raises(ValueError):
        apply_best_reply(np.zeros((21, 3)), spec)


def test_multiplicity_double_well_flags_only_zero():
    spec = double_well_game(0.0, 1.0, 100)
    rep = multiplicity_scan(spec, np.linspace(-2, 2, 401), nu=10.0)
    assert np.allclose(rep.flagged_points[:, 0], [0.0], atol=1e-12)
    assert rep.measure == pytest.approx(1.0 / 400.0)


def test_multiplicity_convex_empty():
    spec = target_game(c=0.3, T=1.0, K=50)
    rep = multiplicity_scan(spec, np.linspace(-2, 2, 101), nu=10.0)
    assert rep.flagged.sum() == 0 and rep.measure == 0.0


def test_tilt_moves_tie_point_to_half_tilt():
    # (y - xbar)^2 / T + tilt y = (y^2 + xbar^2) / T when xbar = tilt T / 2: the two wells tie there
    tilt, T = 0.1, 1.0
    spec = double_well_game(0.0, T, 100, tilt=tilt)
    rep = multiplicity_scan(spec, np.linspace(-2, 2, 401), nu=10.0)
    assert np.allclose(rep.flagged_points[:, 0], [tilt * T / 2], atol=1e-12)
    # away from that point the tilt does separate the costs
    from lagmfg.pmp import solve_ocp
    from lagmfg.best_reply import BestReplyConfig
    sol = solve_ocp(np.zeros(1), spec.problem, None, BestReplyConfig().shooting_for(spec))
    assert not sol.multiple and sol.cost_gap > 1e-3


def test_tilted_scan_empty_when_tie_point_off_grid():
    spec = double_well_game(0.0, 1.0, 100, tilt=0.15)
    for npts in (101, 201, 401):
        assert multiplicity_scan(spec, np.linspace(-2, 2, npts), nu=10.0).measure == 0.0
