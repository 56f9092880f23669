import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.constants import epsilon_0, mu_0

from paraexp_em.fitgrid import (GridError, StaggeredGrid, build_curl_operators,
                                build_divergence_operators, build_material_matrices,
                                topological_curl)


def brute_force_curl(grid):
    """Incidence curl from face boundaries, one oriented loop per face."""
    nx, ny, nz = grid.shape
    shape = (nx, ny, nz)
    C = np.zeros((grid.n_dof, grid.n_dof))
    for k in range(nz):
        for j in range(ny):
            for i in range(nx):
                p = (i, j, k)
                for w in range(3):
                    u, v = (w + 1) % 3, (w + 2) % 3
                    if p[u] == shape[u] - 1 or p[v] == shape[v] - 1:
                        continue  # face leaves the grid
                    pu = list(p); pu[u] += 1
                    pv = list(p); pv[v] += 1
                    row = grid.edge_index(w, *p)
                    C[row, grid.edge_index(u, *p)] += 1
                    C[row, grid.edge_index(v, *pu)] += 1
                    C[row, grid.edge_index(u, *pv)] -= 1
                    C[row, grid.edge_index(v, *p)] -= 1
    return C


@pytest.mark.parametrize("shape", [(3, 3, 2), (4, 3, 3), (5, 5, 2)])
def test_curl_matches_face_loops(shape):
    grid = StaggeredGrid.uniform((1.0, 1.0, 1.0), shape)
    oracle = brute_force_curl(grid)
    real = np.ix_(grid.real_faces(), grid.real_edges())
    assert np.array_equal(topological_curl(grid).toarray()[real], oracle[real])
    C, C_dual = build_curl_operators(grid)
    active = grid.real_edges() & ~grid.pec_edges()
    assert np.array_equal(C.toarray(), oracle * active[None, :])
    assert np.array_equal(C_dual.toarray(), C.toarray().T)


def test_curl_entries_are_incidences():
    grid = StaggeredGrid.uniform((1.0, 2.0, 1.0), (4, 5, 3))
    C, _ = build_curl_operators(grid)
    assert set(np.unique(C.toarray())) <= {-1.0, 0.0, 1.0}


@pytest.mark.parametrize("shape", [(5, 5, 2), (5, 5, 5), (3, 4, 6)])
def test_divergence_kills_curl(shape):
    grid = StaggeredGrid.uniform((1.0, 1.0, 1.0), shape)
    C, C_dual = build_curl_operators(grid)
    S, S_dual = build_divergence_operators(grid)
    assert abs(S.matrix @ C.matrix).max() == 0
    assert abs(S_dual.matrix @ C_dual.matrix).max() == 0
    assert abs(S.matrix @ topological_curl(grid)).max() == 0


def test_pec_rows_and_virtual_faces_vanish():
    grid = StaggeredGrid.uniform((1.0, 1.0, 1.0), (4, 4, 3))
    C, _ = build_curl_operators(grid)
    rows = np.asarray(abs(C.matrix).sum(axis=1)).ravel()
    assert np.all(rows[~grid.real_faces()] == 0)


def test_uniform_vacuum_interior_metric():
    delta = 0.5
    grid = StaggeredGrid.uniform((2.0, 2.0, 2.0), (5, 5, 5))
    M_eps, M_mu = build_material_matrices(grid)
    interior = np.tile(grid.interior_points(), 3)
    assert np.allclose(M_eps.diagonal[interior], epsilon_0 * delta, rtol=1e-14)
    assert np.allclose(M_mu.diagonal[interior], mu_0 * delta, rtol=1e-14)


def test_boundary_metric_by_hand():
    # 3x3x2 slab, spacing 5 m in-plane and 1 m in z: a z-edge at the center
    # sees four quarter cells of 2.5 m x 2.5 m
    grid = StaggeredGrid.uniform((10.0, 10.0, 1.0), (3, 3, 2))
    M_eps, M_mu = build_material_matrices(grid)
    center_z = grid.edge_index(2, 1, 1, 0)
    assert np.isclose(M_eps.diagonal[center_z], epsilon_0 * 4 * 2.5 * 2.5 / 1.0)
    corner_z = grid.edge_index(2, 0, 0, 0)
    assert np.isclose(M_eps.diagonal[corner_z], epsilon_0 * 2.5 * 2.5)
    # bottom z-face: area 25 m^2, dual edge is the single 0.5 m half cell above
    face = grid.edge_index(2, 0, 0, 0)
    assert np.isclose(M_mu.diagonal[face], 25.0 / (0.5 / mu_0))


def test_doubling_permittivity_doubles_metric():
    grid = StaggeredGrid.uniform((1.0, 1.0, 1.0), (4, 4, 4))
    a, _ = build_material_matrices(grid, epsilon_0)
    b, _ = build_material_matrices(grid, 2 * epsilon_0)
    real = grid.real_edges()
    assert np.allclose(b.diagonal[real], 2 * a.diagonal[real], rtol=1e-15)


def test_series_average_for_permeability():
    # two cells stacked along z with mu1, mu2: the shared z-face sees both halves
    grid = StaggeredGrid(np.array([1.0]), np.array([1.0]), np.array([1.0, 1.0]))
    mu = np.array([mu_0, 3 * mu_0]).reshape(1, 1, 2)
    _, M_mu = build_material_matrices(grid, epsilon_0, mu)
    zface = grid.edge_index(2, 0, 0, 1)
    assert np.isclose(M_mu.diagonal[zface], 1.0 / (0.5 / mu_0 + 0.5 / (3 * mu_0)))


@pytest.mark.parametrize("bad", [0.0, -1.0, np.nan])
def test_rejects_bad_spacing(bad):
    with pytest.raises(GridError):
        StaggeredGrid(np.array([1.0, bad]), np.array([1.0]), np.array([1.0]))


def test_rejects_single_point_dimension():
    with pytest.raises(GridError):
        StaggeredGrid.uniform((1.0, 1.0, 1.0), (1, 4, 4))


def test_rejects_nonpositive_material():
    grid = StaggeredGrid.uniform((1.0, 1.0, 1.0), (3, 3, 3))
    with pytest.raises(GridError):
        build_material_matrices(grid, -epsilon_0)
    eps = np.full(grid.cell_shape, epsilon_0)
    eps[0, 0, 0] = 0.0
    with pytest.raises(GridError):
        build_material_matrices(grid, eps)


def test_only_pec_supported():
    grid = StaggeredGrid.uniform((1.0, 1.0, 1.0), (3, 3, 3))
    with pytest.raises(GridError):
        build_curl_operators(grid, boundary="PMC")


def test_index_layout():
    grid = StaggeredGrid.uniform((1.0, 1.0, 1.0), (3, 4, 5))
    assert grid.point_index(2, 3, 4) == 2 + 3 * 3 + 3 * 4 * 4
    assert grid.edge_index(1, 0, 0, 0) == grid.n
    X, Y, Z = grid.point_coords()
    p = grid.point_index(1, 2, 3)
    assert np.allclose((X[p], Y[p], Z[p]), (0.5, 2 / 3, 0.75))


spacings = st.lists(st.floats(0.2, 3.0), min_size=1, max_size=4).map(np.array)


@given(spacings, spacings, spacings)
def test_divergence_identity_on_random_grids(dx, dy, dz):
    grid = StaggeredGrid(dx, dy, dz)
    C, C_dual = build_curl_operators(grid)
    S, S_dual = build_divergence_operators(grid)
    assert abs(S.matrix @ C.matrix).max() == 0
    assert abs(S_dual.matrix @ C_dual.matrix).max() == 0


@given(spacings, spacings, spacings, st.floats(1.0, 10.0), st.floats(1.0, 10.0))
def test_metric_positive_and_homogeneous(dx, dy, dz, er, mr):
    grid = StaggeredGrid(dx, dy, dz)
    M_eps, M_mu = build_material_matrices(grid, er * epsilon_0, mr * mu_0)
    assert np.all(M_eps.diagonal > 0) and np.all(M_mu.diagonal > 0)
    base_e, base_m = build_material_matrices(grid)
    assert np.allclose(M_eps.diagonal[grid.real_edges()], er * base_e.diagonal[grid.real_edges()])
    assert np.allclose(M_mu.diagonal[grid.real_faces()], mr * base_m.diagonal[grid.real_faces()])
