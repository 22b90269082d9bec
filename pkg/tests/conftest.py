from __future__ import annotations

import numpy as np
import pytest

from lagmfg.fixed_point import picard_iterate
from lagmfg.games import two_well_fixed_points, two_well_game

# acceptance lines collected by tests/test_acceptance.py
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def two_well_T3():
    return two_well_game(kappa=2.0, T=3.0, K=200)


@pytest.fixture(scope="session")
def y1_discrete(two_well_T3):
    """Discrete fixed point near the continuous monotone solution (Picard from it)."""
    y1 = two_well_fixed_points(2.0, 3.0, 200)["y1"]
    run = picard_iterate(y1[:, None], two_well_T3, tol=1e-10, adaptive=False, keep_history=False)
    assert run.converged
    return run.eta_star


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
