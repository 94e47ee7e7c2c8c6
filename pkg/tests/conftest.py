"""Shared fixtures: the default grid and kernel, plus three short
simulations reused by the moment and dynamics tests (session-scoped, they
are deterministic and immutable)."""
import numpy as np
import pytest

from traitlab import (RunConfig, make_grid, make_segregation_kernel,
                      quadratic, simulate)


@pytest.fixture(scope="session")
def grid():
    return make_grid(-6.0, 6.0, 1024)


@pytest.fixture(scope="session")
def kernel(grid):
    return make_segregation_kernel(0.2, grid)


@pytest.fixture
def rng():
    return np.random.default_rng(1905)


@pytest.fixture(scope="session")
def renorm_run():
    cfg = RunConfig(mortality=quadratic(1.0), model="sexual_renormalized",
                    epsilon=0.2, t_end=0.3)
    return simulate(cfg)


@pytest.fixture(scope="session")
def full_run():
    cfg = RunConfig(mortality=quadratic(1.0), model="sexual_full",
                    epsilon=0.2, t_end=0.3)
    return simulate(cfg)


@pytest.fixture(scope="session")
def asexual_run():
    cfg = RunConfig(mortality=quadratic(1.0), model="asexual_full",
                    epsilon=0.1, t_end=0.3)
    return simulate(cfg)
