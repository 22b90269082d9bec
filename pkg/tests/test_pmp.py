from __future__ import annotations

import math

import numpy as np
import pytest

from lagmfg.errors import DivergenceError, NoCandidateError
from lagmfg.games import (double_well_game, double_well_roots, integrator_dynamics, quadratic_control_cost,
                          target_closed_form, target_game, two_well_game)
from lagmfg.model import ControlProblem, RunningCost, TerminalCost, TimeGrid
from lagmfg.pmp import (ShootingConfig, a_priori_violations, integrate_pmp_backward, integrate_pmp_forward,
                        kkt_residual, pointwise_control, shoot, solve_ocp)

BOX = ShootingConfig(box_radius=3.0)


def _quadratic():
    return integrator_dynamics(1), quadratic_control_cost(1)


def test_pointwise_control_quadratic():
    dyn, run = _quadratic()
    u = pointwise_control(0.0, np.zeros(1), np.array([3.0]), np.zeros(1), dyn, run)
    assert u == pytest.approx([-1.5], abs=1e-14)
    u = pointwise_control(0.0, np.zeros(1), np.zeros(1), np.zeros(1), dyn, run)
    assert u == pytest.approx([0.0], abs=1e-14)


def test_pointwise_control_box_matches_grid_minimization():
    dyn = integrator_dynamics(1, -1.0, 1.0)
    run = quadratic_control_cost(1)
    u = pointwise_control(0.0, np.zeros(1), np.array([4.0]), np.zeros(1), dyn, run)
    w = np.arange(-1.0, 1.0 + 5e-5, 1e-4)
    assert u[0] == pytest.approx(w[np.argmin(w * w + 4 * w)], abs=1e-12)
    assert u[0] == -1.0


def test_pointwise_control_nonquadratic_newton():
    # L = u^2 + 0.1 u^4, f = u: 2u + 0.4u^3 + p = 0
    dyn = integrator_dynamics(1)
    run = RunningCost(lambda t, x, u, e: u[..., 0] ** 2 + 0.1 * u[..., 0] ** 4,
                      grad_u=lambda t, x, u, e: 2 * u + 0.4 * u ** 3,
                      hess_uu=lambda t, x, u, e: (2 + 1.2 * u * u)[..., None], convexity=2.0)
    p = 2.5
    u = pointwise_control(0.0, np.zeros(1), np.array([p]), np.zeros(1), dyn, run)[0]
    assert 2 * u + 0.4 * u ** 3 + p == pytest.approx(0.0, abs=1e-12)
    assert abs(kkt_residual(0.0, np.zeros(1), np.array([p]), np.zeros(1), np.array([u]), dyn, run)).max() < 1e-10


def test_backward_target_example():
    spec = target_game(c=0.0, T=1.0, K=50)
    traj = integrate_pmp_backward(np.array([0.5]), spec.problem)
    t = spec.grid.nodes
    assert traj.states[0, 0] == pytest.approx(1.0, abs=1e-13)
    assert np.allclose(traj.adjoints, 1.0, atol=1e-13)
    assert np.allclose(traj.states[:, 0], 0.5 + (1 - t) * 0.5, atol=1e-13)


def test_backward_stationary_at_target():
    spec = target_game(c=0.7, T=1.0, K=20)
    traj = integrate_pmp_backward(np.array([0.7]), spec.problem)
    assert np.allclose(traj.states, 0.7, atol=1e-15)
    assert np.allclose(traj.adjoints, 0.0, atol=1e-15)
    assert traj.cost == pytest.approx(0.0, abs=1e-15)


def test_backward_two_well_zero():
    spec = two_well_game(2.0, 3.0, 50)
    traj = integrate_pmp_backward(np.zeros(1), spec.problem, np.zeros((51, 1)))
    assert np.all(traj.states == 0.0) and np.all(traj.adjoints == 0.0)


def test_backward_blowup_raises_divergence():
    dyn = integrator_dynamics(1)
    # L = u^2 + x^4: backward in time x and p feed each other cubically and blow up
    run = quadratic_control_cost(1, lambda t, x, e: x[..., 0] ** 4, lambda t, x, e: 4.0 * x ** 3)
    term = TerminalCost(lambda x, e: np.zeros(np.shape(x)[:-1]), lambda x, e: np.zeros(np.shape(x)))
    problem = ControlProblem(dyn, run, term, TimeGrid(5.0, 100))
    with pytest.raises(DivergenceError):
        integrate_pmp_backward(np.array([10.0]), problem)


def test_shoot_target_unique_closed_form():
    T, c = 2.0, 1.3
    spec = target_game(c=c, T=T, K=100)
    cands = shoot(np.zeros(1), spec.problem, None, BOX)
    assert len(cands) == 1
    t = spec.grid.nodes
    assert np.allclose(cands[0].states[:, 0], target_closed_form(t, np.array([c]), T)[:, 0], atol=1e-10)
    assert np.allclose(cands[0].states[:, 0], t / (1 + T) * c, atol=1e-10)


def test_double_well_three_roots_symmetric():
    spec = double_well_game(0.0, 1.0, 200)
    cands = shoot(np.zeros(1), spec.problem, None, BOX)
    ys = np.sort([c.terminal[0] for c in cands])
    assert len(ys) == 3
    assert ys[1] == pytest.approx(0.0, abs=1e-10)
    assert ys[0] == pytest.approx(-ys[2], abs=1e-10)
    assert 0 < ys[2] < 1
    # continuous oracle: roots of the terminal cubic
    assert np.allclose(ys, np.sort(double_well_roots(0.0, 1.0)), atol=1e-8)
    costs = {round(c.terminal[0], 6): c.cost for c in cands}
    assert costs[0.0] > max(v for k, v in costs.items() if k != 0.0)


def test_double_well_far_start_single_root():
    spec = double_well_game(2.0, 1.0, 200)
    cands = shoot(np.array([2.0]), spec.problem, None, BOX)
    assert len(cands) == 1 and cands[0].terminal[0] > 1


def test_solve_ocp_double_well_tie_and_clear():
    spec = double_well_game(0.0, 1.0, 200)
    sol = solve_ocp(np.zeros(1), spec.problem, None, BOX)
    assert sol.multiple and len(sol.optimal) == 2
    c = [sol.candidates[i].cost for i in sol.optimal]
    assert abs(c[0] - c[1]) < 1e-9
    # lexicographic selection picks the negative root
    assert sol.selected.terminal[0] < 0
    sol = solve_ocp(np.array([0.5]), double_well_game(0.5, 1.0, 200).problem, None, BOX)
    assert not sol.multiple and sol.selected.terminal[0] > 0
    assert all(sol.min_cost <= c.cost for c in sol.candidates)


def test_solve_ocp_two_well_zero_unique():
    spec = two_well_game(2.0, 3.0, 100)
    sol = solve_ocp(np.zeros(1), spec.problem, np.zeros((101, 1)), ShootingConfig(box_radius=10.0))
    assert len(sol.optimal) == 1 and not sol.multiple
    assert np.max(np.abs(sol.selected.states)) < 1e-10


def test_forward_reintegration_consistent():
    spec = double_well_game(0.3, 1.0, 200)
    for c in shoot(np.array([0.3]), spec.problem, None, BOX):
        xs, ps = integrate_pmp_forward(c.states[0], c.adjoints[0], spec.problem)
        y = c.terminal
        assert np.allclose(xs[-1], y, atol=1e-9)
        assert np.allclose(ps[-1], 4 * y * (y * y - 1), atol=1e-9)


def test_stationarity_residual_along_trajectory():
    spec = double_well_game(0.3, 1.0, 100)
    dyn, run = spec.dynamics, spec.running
    for c in shoot(np.array([0.3]), spec.problem, None, BOX):
        res = kkt_residual(0.0, c.states, c.adjoints, np.zeros((101, 1)), c.controls, dyn, run)
        assert np.max(np.abs(res)) < 1e-8


def test_no_candidate_for_unbounded_problem():
    # psi = -x^2, T = 1: x(0; y) = y + T psi'(y) / 2 = 0 for every y, so xbar = 1 has no extremal
    term = TerminalCost(lambda x, e: -x[..., 0] ** 2, lambda x, e: -2.0 * x)
    problem = ControlProblem(integrator_dynamics(1), quadratic_control_cost(1), term, TimeGrid(1.0, 20))
    with pytest.raises(NoCandidateError):
        shoot(np.array([1.0]), problem, None, BOX)


def test_a_priori_violation_reported():
    spec = double_well_game(0.0, 1.0, 50)
    traj = shoot(np.zeros(1), spec.problem, None, BOX)[0]
    assert a_priori_violations(traj, 10.0) == []
    assert a_priori_violations(traj, 0.01)


def test_rk4_fourth_order_on_lq_closed_form():
    # xdot = u, L = u^2 + x^2: x = xbar cosh(T - t) / cosh T; shoot back from the exact terminal point
    xbar, T = 1.0, 1.5
    run = quadratic_control_cost(1, lambda t, x, e: x[..., 0] ** 2, lambda t, x, e: 2 * x)
    term = TerminalCost(lambda x, e: np.zeros(np.shape(x)[:-1]), lambda x, e: np.zeros(np.shape(x)))
    errs = []
    for K in (10, 20, 40, 80):
        problem = ControlProblem(integrator_dynamics(1), run, term, TimeGrid(T, K))
        traj = integrate_pmp_backward(np.array([xbar / math.cosh(T)]), problem)
        errs.append(abs(traj.states[0, 0] - xbar))
    ratios = [a / b for a, b in zip(errs, errs[1:])]
    assert all(14.0 < r < 18.0 for r in ratios)


def test_rk4_exact_on_affine_closed_form():
    # the target trajectory is affine in t, which RK4 integrates without truncation error
    for K in (5, 10, 20):
        spec = target_game(c=1.0, T=1.0, K=K)
        traj = shoot(np.zeros(1), spec.problem, None, BOX)[0]
        assert np.max(np.abs(traj.states[:, 0] - spec.grid.nodes / 2.0)) < 1e-12
