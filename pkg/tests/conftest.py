import numpy as np
import pytest
from hypothesis import settings

from paraexp_em.fitgrid import StaggeredGrid
from paraexp_em.system import assemble, center_line_source

settings.register_profile("default", max_examples=25, deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def small_system():
    """5x5x2 cavity (20 m x 20 m x 1 m) with a Gaussian line current."""
    grid = StaggeredGrid.uniform((20.0, 20.0, 1.0), (5, 5, 2))
    return assemble(grid, source=center_line_source(grid, "gaussian_pulse", sigma_t=2e-8))


@pytest.fixture(scope="session")
def free_system():
    grid = StaggeredGrid.uniform((20.0, 20.0, 1.0), (5, 5, 2))
    return assemble(grid)


@pytest.fixture(scope="session")
def cube_system():
    """Source-free 4x5x3 box with non-uniform spacings and materials."""
    rng = np.random.default_rng(7)
    grid = StaggeredGrid(rng.uniform(0.5, 1.5, 3), rng.uniform(0.5, 1.5, 4), rng.uniform(0.5, 1.5, 2))
    eps = 8.854e-12 * rng.uniform(1, 4, grid.cell_shape)
    mu = 1.2566e-6 * rng.uniform(1, 2, grid.cell_shape)
    return assemble(grid, eps, mu)


def random_state(sys, seed=0):
    """Random normalized state supported on the active DOFs."""
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(sys.size)
    u[sys.h_slice][~sys.active_h] = 0.0
    u[sys.e_slice][~sys.active_e] = 0.0
    return u
