from __future__ import annotations

import numpy as np
import pytest

from fracground.domain import build_grid, disc, interval
from fracground.operator import assemble
from fracground.solver import ProblemParams, SolverConfig, solve_least_energy
from fracground.spectra import assemble_linearized, eigen_solve

P1 = ProblemParams(0.5, 1.0, 2.0, 1)
P2 = ProblemParams(0.5, 1.0, 1.5, 2)


@pytest.fixture(scope="session")
def grid_1d():
    return build_grid(interval(1.0), 1 / 16)


@pytest.fixture(scope="session")
def grid_2d():
    return build_grid(disc(1.0), 1 / 6)


@pytest.fixture(scope="session")
def sys_1d(grid_1d):
    return assemble(grid_1d, 0.5, 1.0)


@pytest.fixture(scope="session")
def sys_2d(grid_2d):
    return assemble(grid_2d, 0.5, 1.0)


@pytest.fixture(scope="session")
def solved_1d():
    """Least-energy solution on (-8, 8), h = 0.05."""
    sys = assemble(build_grid(interval(8.0), 0.05), 0.5, 1.0)
    return sys, solve_least_energy(sys, P1, SolverConfig(tol=1e-12))


@pytest.fixture(scope="session")
def solved_2d():
    """Least-energy solution on the disc of radius 4, h = 0.25."""
    sys = assemble(build_grid(disc(4.0), 0.25), 0.5, 1.0)
    return sys, solve_least_energy(sys, P2, SolverConfig(tol=1e-12))


@pytest.fixture(scope="session")
def spectrum_1d(solved_1d):
    sys, res = solved_1d
    lin = assemble_linearized(sys, res.u, P1)
    return lin, eigen_solve(lin, 4)


@pytest.fixture(scope="session")
def spectrum_2d(solved_2d):
    sys, res = solved_2d
    lin = assemble_linearized(sys, res.u, P2)
    return lin, eigen_solve(lin, 4)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def sweep_1d():
    """Operator-validation sweep on (-R, R), R = 2 ... 32, h = 0.05."""
    from fracground.experiments import SweepConfig, sweep

    cfg = SweepConfig(s=0.5, lam=1.0, p=2.0, N=1, kind="interval", R=(2, 4, 8, 16, 32), h0=0.05, multistart="none")
    return sweep(cfg)
