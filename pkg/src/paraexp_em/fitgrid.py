"""Staggered hexahedral grid and Finite Integration Technique topology.

Canonical indexing: primal point (i, j, k) has index p = i + nx*j + nx*ny*k.
Edge and face vectors have length n_dof = 3n, stacked as [x, y, z] blocks;
the x-edge at p runs from p to p + 1 and the x-face at p is spanned by the
y- and z-edges at p. Edges or faces sticking out of the grid are kept as
zero-padded "virtual" entries so the layout stays a plain 3n.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.constants import epsilon_0, mu_0

from .ledger import CostLedger


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class StaggeredGrid:
    dx: np.ndarray
    dy: np.ndarray
    dz: np.ndarray
    origin: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        for name in ("dx", "dy", "dz"):
            d = np.asarray(getattr(self, name), dtype=float).ravel()
            if d.size < 1:
                raise GridError(f"{name}: every dimension needs at least 2 points")
            if not np.all(np.isfinite(d)) or np.any(d <= 0):
                raise GridError(f"{name}: spacings must be finite and strictly positive")
            d.setflags(write=False)
            object.__setattr__(self, name, d)

    @classmethod
    def uniform(cls, lengths, counts, origin=(0.0, 0.0, 0.0)) -> "StaggeredGrid":
        """Grid with ``counts`` points per axis spread evenly over ``lengths`` meters."""
        spacings = []
        for L, n in zip(lengths, counts):
            if int(n) < 2:
                raise GridError("every dimension needs at least 2 points")
            spacings.append(np.full(int(n) - 1, float(L) / (int(n) - 1)))
        return cls(*spacings, origin=tuple(origin))

    @property
    def shape(self) -> tuple:
        return (self.dx.size + 1, self.dy.size + 1, self.dz.size + 1)

    @property
    def n(self) -> int:
        nx, ny, nz = self.shape
        return nx * ny * nz

    @property
    def n_dof(self) -> int:
        return 3 * self.n

    @property
    def cell_shape(self) -> tuple:
        return (self.dx.size, self.dy.size, self.dz.size)

    def point_index(self, i: int, j: int, k: int) -> int:
        nx, ny, _ = self.shape
        return i + nx * j + nx * ny * k

    def edge_index(self, direction: int, i: int, j: int, k: int) -> int:
        return direction * self.n + self.point_index(i, j, k)

    def point_coords(self) -> tuple:
        """Coordinates of all primal points, each flattened in canonical order."""
        axes = [o + np.concatenate(([0.0], np.cumsum(d)))
                for o, d in zip(self.origin, (self.dx, self.dy, self.dz))]
        X, Y, Z = np.meshgrid(*axes, indexing="ij")
        return X.ravel(order="F"), Y.ravel(order="F"), Z.ravel(order="F")

    def _ijk(self):
        nx, ny, nz = self.shape
        I, J, K = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij")
        return I.ravel(order="F"), J.ravel(order="F"), K.ravel(order="F")

    def real_edges(self) -> np.ndarray:
        """Boolean mask over n_dof: edge lies inside the grid (not virtual)."""
        idx = self._ijk()
        return np.concatenate([idx[w] < self.shape[w] - 1 for w in range(3)])

    def real_faces(self) -> np.ndarray:
        """Boolean mask over n_dof: face lies inside the grid (not virtual)."""
        idx = self._ijk()
        masks = []
        for w in range(3):
            u, v = (w + 1) % 3, (w + 2) % 3
            masks.append((idx[u] < self.shape[u] - 1) & (idx[v] < self.shape[v] - 1))
        return np.concatenate(masks)

    def pec_edges(self) -> np.ndarray:
        """Mask of real edges that are tangential to the boundary."""
        idx = self._ijk()
        masks = []
        for w in range(3):
            on_bnd = np.zeros(self.n, dtype=bool)
            for a in range(3):
                if a != w:
                    on_bnd |= (idx[a] == 0) | (idx[a] == self.shape[a] - 1)
            masks.append(on_bnd)
        return np.concatenate(masks) & self.real_edges()

    def interior_points(self) -> np.ndarray:
        idx = self._ijk()
        mask = np.ones(self.n, dtype=bool)
        for a in range(3):
            mask &= (idx[a] > 0) & (idx[a] < self.shape[a] - 1)
        return mask


class SparseOperator:
    """Thin wrapper over a CSR matrix that books one SMVP per application."""

    def __init__(self, matrix, symmetry: str = "none"):
        if symmetry not in ("none", "skew", "diagonal"):
            raise ValueError(f"unknown symmetry tag {symmetry!r}")
        if symmetry == "diagonal":
            diag = np.asarray(matrix, dtype=float).ravel()
            self._diag = diag
            self.matrix = sp.diags(diag, format="csr")
        else:
            m = sp.csr_matrix(matrix)
            m.sum_duplicates()
            m.eliminate_zeros()
            self._diag = None
            self.matrix = m
        self.symmetry = symmetry

    @property
    def shape(self) -> tuple:
        return self.matrix.shape

    @property
    def diagonal(self) -> np.ndarray:
        if self._diag is None:
            raise AttributeError("operator is not diagonal")
        return self._diag

    def apply(self, x, ledger: CostLedger | None = None, category: str = "leapfrog_curl"):
        if ledger is not None:
            ledger.add(category)
        if self._diag is not None:
            return self._diag * x
        return self.matrix @ x

    __call__ = apply

    @property
    def T(self) -> "SparseOperator":
        tag = {"none": "none", "skew": "skew", "diagonal": "diagonal"}[self.symmetry]
        if self._diag is not None:
            return SparseOperator(self._diag, "diagonal")
        return SparseOperator(self.matrix.T.tocsr(), tag)

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def __repr__(self):
        return f"SparseOperator(shape={self.shape}, nnz={self.matrix.nnz}, symmetry={self.symmetry!r})"


def _shift_differences(grid: StaggeredGrid) -> list:
    """Forward-difference matrices P_w = -I + S_w with the shift cut at the far end."""
    n = grid.n
    nx, ny, _ = grid.shape
    strides = (1, nx, nx * ny)
    idx = grid._ijk()
    out = []
    for w in range(3):
        rows = np.flatnonzero(idx[w] < grid.shape[w] - 1)
        shift = sp.csr_matrix((np.ones(rows.size), (rows, rows + strides[w])), shape=(n, n))
        out.append((shift - sp.identity(n, format="csr")).tocsr())
    return out


def topological_curl(grid: StaggeredGrid) -> sp.csr_matrix:
    """Primal incidence curl without boundary conditions, entries in {-1, 0, 1}."""
    Px, Py, Pz = _shift_differences(grid)
    return sp.bmat([[None, -Pz, Py],
                    [Pz, None, -Px],
                    [-Py, Px, None]], format="csr")


def build_curl_operators(grid: StaggeredGrid, boundary: str = "PEC"):
    """Primal curl C and dual curl C_dual = C^T with PEC columns removed."""
    if boundary.upper() != "PEC":
        raise GridError("only PEC boundaries are supported")
    if min(grid.shape) < 2:
        raise GridError("grid needs at least 2 points per dimension")
    active = grid.real_edges() & ~grid.pec_edges()
    C = topological_curl(grid) @ sp.diags(active.astype(float))
    C = sp.csr_matrix(C)
    C.eliminate_zeros()
    C = SparseOperator(C)
    return C, C.T


def build_divergence_operators(grid: StaggeredGrid):
    """Primal divergence S (kills C) and dual divergence S_dual (kills C_dual).

    S acts on primal-face fluxes (b); S_dual acts on dual-face fluxes (d)
    and is restricted to interior dual cells, which is what keeps
    S_dual @ C_dual exactly zero once PEC edges are removed.
    """
    Px, Py, Pz = _shift_differences(grid)
    S = sp.hstack([Px, Py, Pz], format="csr")
    inner = sp.diags(grid.interior_points().astype(float))
    S_dual = -(inner @ sp.hstack([Px.T, Py.T, Pz.T])).tocsr()
    S_dual.eliminate_zeros()
    return SparseOperator(S), SparseOperator(S_dual)


def _check_material(values, grid: StaggeredGrid, name: str) -> np.ndarray:
    arr = np.broadcast_to(np.asarray(values, dtype=float), grid.cell_shape).copy()
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise GridError(f"{name} must be strictly positive in every cell")
    return arr


def build_material_matrices(grid: StaggeredGrid, eps_map=epsilon_0, mu_map=mu_0):
    """Diagonal permittivity (edges) and permeability (faces) matrices.

    ``eps_map`` and ``mu_map`` are cellwise arrays of shape ``grid.cell_shape``
    (scalars broadcast). M_eps averages eps over the dual facet of each edge;
    M_mu combines the two half-cells along each dual edge in series.
    """
    eps = _check_material(eps_map, grid, "permittivity")
    mu = _check_material(mu_map, grid, "permeability")
    d = (grid.dx, grid.dy, grid.dz)
    shape = grid.shape

    m_eps = []
    m_mu = []
    for w in range(3):
        u, v = (w + 1) % 3, (w + 2) % 3
        half_u = 0.5 * d[u]
        half_v = 0.5 * d[v]

        # edge along w: sum eps * (du/2)(dv/2) over the (up to) 4 cells around it
        wts = eps * _outer3(np.ones(d[w].size), half_u, half_v, w, u, v)
        acc = np.zeros(shape)
        for su in (0, 1):
            for sv in (0, 1):
                sl = [slice(None)] * 3
                sl[w] = slice(0, shape[w] - 1)
                sl[u] = slice(su, su + shape[u] - 1)
                sl[v] = slice(sv, sv + shape[v] - 1)
                acc[tuple(sl)] += wts
        length = np.ones(shape)
        sl = [slice(None)] * 3
        sl[w] = slice(0, shape[w] - 1)
        length[tuple(sl)] = _along(d[w], w)
        m_eps.append((acc / length).ravel(order="F"))

        # face normal to w: area du*dv over series sum of (dw/2)/mu
        rel = _outer3(0.5 * d[w], np.ones(d[u].size), np.ones(d[v].size), w, u, v) / mu
        acc = np.zeros(shape)
        for sw in (0, 1):
            sl = [slice(None)] * 3
            sl[w] = slice(sw, sw + shape[w] - 1)
            sl[u] = slice(0, shape[u] - 1)
            sl[v] = slice(0, shape[v] - 1)
            acc[tuple(sl)] += rel
        area = np.zeros(shape)
        sl = [slice(None)] * 3
        sl[u] = slice(0, shape[u] - 1)
        sl[v] = slice(0, shape[v] - 1)
        area[tuple(sl)] = _outer3(np.ones(shape[w]), d[u], d[v], w, u, v)
        with np.errstate(divide="ignore", invalid="ignore"):
            m_mu.append(np.where(acc > 0, area / np.where(acc > 0, acc, 1.0), 0.0).ravel(order="F"))

    m_eps = np.concatenate(m_eps)
    m_mu = np.concatenate(m_mu)
    real_e = grid.real_edges()
    real_f = grid.real_faces()
    # virtual entries only need to be invertible; they never couple to anything
    m_eps[~real_e] = m_eps[real_e].mean()
    m_mu[~real_f] = m_mu[real_f].mean()
    return SparseOperator(m_eps, "diagonal"), SparseOperator(m_mu, "diagonal")


def _along(a, axis):
    shape = [1, 1, 1]
    shape[axis] = a.size
    return np.asarray(a).reshape(shape)


def _outer3(aw, au, av, w, u, v):
    return _along(aw, w) * _along(au, u) * _along(av, v)
