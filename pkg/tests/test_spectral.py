from __future__ import annotations

import math

import numpy as np
import pytest

from lagmfg.errors import PreconditionError
from lagmfg.games import build_example, two_well_game
from lagmfg.model import MomentPath
from lagmfg.spectral import (analytic_spectrum_barycenter, compute_spectrum, eigen_bvp_scan, jacobian_dphi,
                             spectrum_of)


def test_analytic_values_and_order():
    an = analytic_spectrum_barycenter(2.0, 2.0, 5)
    assert an.eigenvalues[0] == pytest.approx(2.0 / (1.0 + math.pi ** 2 / 16.0), rel=1e-14)
    assert np.all(np.diff(an.eigenvalues) < 0)
    assert not an.resonance


def test_analytic_resonance():
    an = analytic_spectrum_barycenter(2.0, math.pi / 2, 3)
    assert an.resonance and an.resonant_index == 1
    assert an.eigenvalues[0] == pytest.approx(1.0, abs=1e-14)
    assert analytic_spectrum_barycenter(2.0, 3 * math.pi / 2, 3).resonant_index == 2


@pytest.mark.parametrize("kappa,T", [(1.0, 2.0), (2.0, 0.0)])
def test_analytic_rejects_bad_parameters(kappa, T):
    with pytest.raises(ValueError):
        analytic_spectrum_barycenter(kappa, T)


def test_spectrum_of_known_matrix():
    J = np.array([[0.5, 1.0], [0.0, -2.0]])
    rep = spectrum_of(J, "unstable")
    assert np.allclose(rep.eigenvalues, [-2.0, 0.5])
    assert rep.spectral_radius == 2.0 and rep.distance_to_one == 0.5
    assert rep.consistent is True
    assert spectrum_of(np.diag([0.5, 0.1]), "unstable").consistent is False
    rot = spectrum_of(np.array([[0.0, -1.0], [1.0, 0.0]]))
    assert rot.spectral_radius == pytest.approx(1.0)


def test_constant_map_jacobian_vanishes():
    spec = build_example("constant_toy").spec
    star = MomentPath.constant(spec.grid, 0.0)
    from lagmfg.best_reply import apply_best_reply
    star = apply_best_reply(star, spec).eta
    J = jacobian_dphi(star, spec)
    assert np.max(np.abs(J)) < 1e-8


def test_jacobian_requires_fixed_point():
    spec = two_well_game(2.0, 2.0, 40)
    with pytest.raises(PreconditionError):
        jacobian_dphi(MomentPath.constant(spec.grid, 0.5), spec)


def test_two_well_zero_matches_closed_form():
    spec = two_well_game(2.0, 2.0, 200)
    rep = compute_spectrum(spec.zero_path(), spec)
    an = analytic_spectrum_barycenter(2.0, 2.0, 5)
    assert np.max(np.abs(rep.eigenvalues[:5].real - an.eigenvalues)) < 1e-3
    assert np.max(np.abs(rep.eigenvalues[:5].imag)) < 1e-6
    y = an.eigenfunction(1, spec.grid.nodes)
    cos = abs(rep.leading_vector.real @ y) / np.linalg.norm(y)
    assert cos > 0.999


def test_bvp_scan_zero_potential_reproduces_closed_form():
    # y1 = 0 makes the potential -1, which is the barycenter linearization at 0
    t = np.linspace(0.0, 2.0, 401)
    res = eigen_bvp_scan(t, np.zeros_like(t), 2.0, (-4.0, 4.0))
    an = analytic_spectrum_barycenter(2.0, 2.0, 5)
    assert np.max(np.abs(res.eigenvalues[:5] - an.eigenvalues)) < 1e-6
    assert np.all(res.eigenvalues > 0)
