"""Ready-made test problems: the 2-D cavity driven by a line current."""
from __future__ import annotations

import math

import numpy as np
from scipy.constants import epsilon_0, mu_0

from .fitgrid import StaggeredGrid
from .leapfrog import cfl_timestep
from .system import DiscreteSystem, assemble, center_line_source

WAVE2D = dict(lengths=(20.0, 20.0, 1.0), counts=(41, 41, 2), i_max=1.0, sigma_t=2e-8,
              interval=(0.0, 2e-7))


def cavity_grid(lengths=WAVE2D["lengths"], counts=WAVE2D["counts"], shrink: float = 1.0,
                shrink_cell=None) -> StaggeredGrid:
    """Uniform box grid; ``shrink`` > 1 narrows one cell column and row by that factor.

    A tensor grid cannot shrink a single element alone, so the x-spacing
    and y-spacing at ``shrink_cell`` (default: a quarter of the way in) are
    both divided by ``shrink``; the size ratio largest/smallest becomes k.
    """
    grid = StaggeredGrid.uniform(lengths, counts)
    if shrink == 1.0:
        return grid
    if shrink < 1.0:
        raise ValueError("shrink factor must be >= 1")
    nx, ny, _ = counts
    i0, j0 = shrink_cell if shrink_cell is not None else (nx // 4, ny // 4)
    dx, dy = grid.dx.copy(), grid.dy.copy()
    dx[i0] /= shrink
    dy[j0] /= shrink
    return StaggeredGrid(dx, dy, grid.dz.copy(), grid.origin)


def wave2d(counts=WAVE2D["counts"], lengths=WAVE2D["lengths"], i_max=WAVE2D["i_max"],
           sigma_t=WAVE2D["sigma_t"], kind="gaussian_pulse", frequency=0.0,
           eps_r=1.0, mu_r=1.0, shrink=1.0) -> DiscreteSystem:
    """PEC box with a z-directed line current through its center column."""
    grid = cavity_grid(lengths, counts, shrink)
    src = center_line_source(grid, kind, i_max=i_max, sigma_t=sigma_t, frequency=frequency)
    return assemble(grid, eps_r * epsilon_0, mu_r * mu_0, src)


def snapped_steps(interval, dt_max: float) -> tuple:
    """Fewest equal steps covering the interval with dt <= dt_max: (n_t, dt)."""
    t0, t1 = interval
    n = max(1, math.ceil((t1 - t0) / dt_max * (1 - 1e-12)))
    return n, (t1 - t0) / n


def cfl_steps(sys: DiscreteSystem, interval, fraction: float = 1.0) -> tuple:
    """Steps for dt close to ``fraction`` times the cellwise CFL estimate."""
    return snapped_steps(interval, fraction * cfl_timestep(sys.grid, sys.eps_map, sys.mu_map))


def ez_probe(sys: DiscreteSystem, point) -> int:
    """Index of the z-edge at the primal node nearest to ``point`` (x, y, z in m)."""
    grid = sys.grid
    idx = []
    for w, (o, d) in enumerate(zip(grid.origin, (grid.dx, grid.dy, grid.dz))):
        nodes = o + np.concatenate(([0.0], np.cumsum(d)))
        k = int(np.argmin(np.abs(nodes - point[w])))
        if w == 2:
            k = min(k, len(nodes) - 2)
        idx.append(k)
    return grid.edge_index(2, *idx)
