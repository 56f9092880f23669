"""Semi-discrete wave system, its normalized skew-symmetric form and sources.

The unknowns are stacked h-block first, e-block second: u_bar = [h, e].
The normalized state is u = T u_bar with T = blkdiag(M_mu^1/2, M_eps^1/2),
which turns M u_bar' + K u_bar = g_bar into u' = A u + g with A skew.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.constants import epsilon_0, mu_0

from .fitgrid import (StaggeredGrid, SparseOperator, build_curl_operators,
                      build_material_matrices)
from .ledger import CostLedger


@dataclass(frozen=True)
class SourceSignal:
    """Line-current excitation: a scalar waveform times a fixed spatial pattern.

    ``support`` holds edge indices and ``weights`` the matching signed weights.
    """

    kind: str = "zero"
    i_max: float = 1.0
    sigma_t: float = 2e-8
    frequency: float = 0.0
    support: tuple = ()
    weights: tuple = ()

    def __post_init__(self):
        if self.kind not in ("gaussian_pulse", "sine", "zero"):
            raise ValueError(f"unknown source kind {self.kind!r}")
        if len(self.support) != len(self.weights):
            raise ValueError("support and weights must have the same length")
        if self.kind == "gaussian_pulse" and self.sigma_t <= 0:
            raise ValueError("sigma_t must be positive")

    def current(self, t: float) -> float:
        """Scalar line current i(t) in amperes."""
        if self.kind == "gaussian_pulse":
            return self.i_max * np.exp(-4.0 * ((t - self.sigma_t) / self.sigma_t) ** 2)
        if self.kind == "sine":
            return self.i_max * np.sin(2.0 * np.pi * self.frequency * t)
        return 0.0

    def current_derivative(self, t: float) -> float:
        if self.kind == "gaussian_pulse":
            x = (t - self.sigma_t) / self.sigma_t
            return self.current(t) * (-8.0 * x / self.sigma_t)
        if self.kind == "sine":
            w = 2.0 * np.pi * self.frequency
            return self.i_max * w * np.cos(w * t)
        return 0.0

    def grid_current(self, t: float, n_dof: int) -> np.ndarray:
        """Grid current vector j(t) on primal edges."""
        j = np.zeros(n_dof)
        if self.kind != "zero" and self.support:
            j[np.asarray(self.support)] = self.current(t) * np.asarray(self.weights, dtype=float)
        return j

    @property
    def is_zero(self) -> bool:
        return self.kind == "zero" or not self.support


def center_line_source(grid: StaggeredGrid, kind: str = "gaussian_pulse", **kw) -> SourceSignal:
    """z-directed line current through the grid's center column, weight +1 per edge."""
    nx, ny, nz = grid.shape
    i, j = nx // 2, ny // 2
    support = tuple(grid.edge_index(2, i, j, k) for k in range(nz - 1))
    return SourceSignal(kind=kind, support=support, weights=(1.0,) * len(support), **kw)


@dataclass(frozen=True)
class DiscreteSystem:
    grid: StaggeredGrid
    C: SparseOperator
    C_dual: SparseOperator
    M_eps: SparseOperator
    M_mu: SparseOperator
    A: SparseOperator
    source: SourceSignal
    eps_map: np.ndarray = field(repr=False, default=None)
    mu_map: np.ndarray = field(repr=False, default=None)

    @property
    def n_dof(self) -> int:
        return self.grid.n_dof

    @property
    def size(self) -> int:
        return 2 * self.grid.n_dof

    @property
    def h_slice(self) -> slice:
        return slice(0, self.n_dof)

    @property
    def e_slice(self) -> slice:
        return slice(self.n_dof, 2 * self.n_dof)

    @property
    def t_diag(self) -> np.ndarray:
        return np.concatenate([np.sqrt(self.M_mu.diagonal), np.sqrt(self.M_eps.diagonal)])

    @property
    def M(self) -> SparseOperator:
        return SparseOperator(np.concatenate([self.M_mu.diagonal, self.M_eps.diagonal]), "diagonal")

    @property
    def K(self) -> SparseOperator:
        return SparseOperator(sp.bmat([[None, self.C.matrix],
                                       [-self.C_dual.matrix, None]], format="csr"))

    @property
    def T(self) -> SparseOperator:
        return SparseOperator(self.t_diag, "diagonal")

    @property
    def active_e(self) -> np.ndarray:
        """Electric DOFs that take part in the dynamics (not virtual, not PEC)."""
        return np.asarray(abs(self.C.matrix).sum(axis=0)).ravel() > 0

    @property
    def active_h(self) -> np.ndarray:
        return np.asarray(abs(self.C.matrix).sum(axis=1)).ravel() > 0


def assemble(grid: StaggeredGrid, eps_map=epsilon_0, mu_map=mu_0,
             source: SourceSignal | None = None) -> DiscreteSystem:
    """Build curls, material matrices and the normalized operator A."""
    C, C_dual = build_curl_operators(grid)
    M_eps, M_mu = build_material_matrices(grid, eps_map, mu_map)
    if C.shape != (grid.n_dof, grid.n_dof) or M_eps.shape != C.shape or M_mu.shape != C.shape:
        raise ValueError("block dimensions do not match")
    ie = 1.0 / np.sqrt(M_eps.diagonal)
    im = 1.0 / np.sqrt(M_mu.diagonal)
    upper = -(sp.diags(im) @ C.matrix @ sp.diags(ie)).tocsr()
    # lower block built as the exact negated transpose so A + A^T == 0 bitwise
    A = sp.bmat([[None, upper], [-upper.T, None]], format="csr")
    return DiscreteSystem(
        grid=grid, C=C, C_dual=C_dual, M_eps=M_eps, M_mu=M_mu,
        A=SparseOperator(A, "skew"),
        source=source if source is not None else SourceSignal(),
        eps_map=np.broadcast_to(np.asarray(eps_map, float), grid.cell_shape).copy(),
        mu_map=np.broadcast_to(np.asarray(mu_map, float), grid.cell_shape).copy(),
    )


def evaluate_source(sys: DiscreteSystem, t: float) -> np.ndarray:
    """Normalized right-hand side g(t) = T^-1 g_bar(t) with g_bar = -[0, j(t)]."""
    g = np.zeros(sys.size)
    if not sys.source.is_zero:
        j = sys.source.grid_current(t, sys.n_dof)
        g[sys.e_slice] = -j / np.sqrt(sys.M_eps.diagonal)
    return g


def transform_to_normalized(sys: DiscreteSystem, u_bar, ledger: CostLedger | None = None):
    """u = T u_bar."""
    return sys.T.apply(np.asarray(u_bar), ledger, "transform")


def transform_from_normalized(sys: DiscreteSystem, u, ledger: CostLedger | None = None):
    """u_bar = T^-1 u."""
    if ledger is not None:
        ledger.add("transform")
    return np.asarray(u) / sys.t_diag


def stack(h, e) -> np.ndarray:
    return np.concatenate([h, e])
