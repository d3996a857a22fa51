"""Shared grids, banks and decompositions.

Session-scoped: everything here is immutable, and the decompositions are the
expensive part of most tests.
"""

import json

import pytest

from gespfactor.factorization import color_factorize
from gespfactor.grid_measure import build_grid, build_measure
from gespfactor.hermite_bank import build_bank
from gespfactor.kernels import gaussian_kernel, rank1_kernel


@pytest.fixture(scope="session")
def gl_grid():
    return build_grid(1, 20.0, 256, "gauss-legendre")


@pytest.fixture(scope="session")
def uniform_grid():
    return build_grid(1, 20.0, 256, "trapezoid")


@pytest.fixture(scope="session")
def measure0(gl_grid):
    return build_measure(gl_grid, 0)


@pytest.fixture(scope="session")
def bank8(gl_grid):
    return build_bank(8, gl_grid)


@pytest.fixture(scope="session")
def uniform_bank8(uniform_grid):
    return build_bank(8, uniform_grid)


@pytest.fixture(scope="session")
def gaussian_coloring(gl_grid):
    return color_factorize(gaussian_kernel(), 0, 0, gl_grid, 64, seed=7)


@pytest.fixture(scope="session")
def smooth_coloring(uniform_grid):
    return color_factorize(gaussian_kernel(), 2, 0, uniform_grid, 64, seed=7)


@pytest.fixture(scope="session")
def flat_coloring(uniform_grid):
    return color_factorize(gaussian_kernel(), 0, 0, uniform_grid, 64, seed=7)


@pytest.fixture(scope="session")
def rank1_coloring(gl_grid):
    return color_factorize(rank1_kernel(), 0, 0, gl_grid, 16, seed=3)


@pytest.fixture
def write_config(tmp_path):
    """Write a config dict to tmp_path and return its path."""
    def _write(payload, name="run.json"):
        path = tmp_path / name
        path.write_text(json.dumps(payload), encoding="utf-8")
        return path
    return _write
