"""Leapfrog (Yee / Stoermer-Verlet) integration on staggered time grids."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .ledger import CostLedger
from .system import DiscreteSystem, SourceSignal


class IntegrationDiverged(FloatingPointError):
    """Raised when Leapfrog produces non-finite field values."""


@dataclass
class FieldState:
    """e at t0 + m*dt, h at t0 + (m + 1/2)*dt."""

    e: np.ndarray
    h: np.ndarray
    m: int
    dt: float
    t0: float = 0.0

    def __post_init__(self):
        if self.e.shape != self.h.shape:
            raise ValueError("e and h must have the same length")

    @property
    def t_e(self) -> float:
        return self.t0 + self.m * self.dt

    @property
    def t_h(self) -> float:
        return self.t0 + (self.m + 0.5) * self.dt


def cfl_timestep(grid, eps_map, mu_map) -> float:
    """Cellwise CFL estimate: min_j sqrt(eps_j mu_j / (1/dx^2 + 1/dy^2 + 1/dz^2))."""
    eps = np.broadcast_to(np.asarray(eps_map, float), grid.cell_shape)
    mu = np.broadcast_to(np.asarray(mu_map, float), grid.cell_shape)
    inv = (1.0 / grid.dx[:, None, None] ** 2
           + 1.0 / grid.dy[None, :, None] ** 2
           + 1.0 / grid.dz[None, None, :] ** 2)
    return float(np.min(np.sqrt(eps * mu / inv)))


def system_cfl(sys: DiscreteSystem) -> float:
    return cfl_timestep(sys.grid, sys.eps_map, sys.mu_map)


def sharp_cfl(spectral_norm: float) -> float:
    """Stability limit 2/||A||_2 of Leapfrog for the normalized operator."""
    return 2.0 / spectral_norm


def _current(sys: DiscreteSystem, source, t: float):
    if source is None:
        source = sys.source
    if isinstance(source, SourceSignal):
        return None if source.is_zero else source.grid_current(t, sys.n_dof)
    return source(t)


def step(sys: DiscreteSystem, state: FieldState, source=None,
         ledger: CostLedger | None = None) -> FieldState:
    """Advance one step: e^(m) -> e^(m+1), then h^(m+1/2) -> h^(m+3/2).

    ``source`` is a SourceSignal, a callable t -> j(t), or None for the
    system's own source. Books exactly two curl SMVPs.
    """
    dt = state.dt
    rhs = sys.C_dual.apply(state.h, ledger, "leapfrog_curl")
    j = _current(sys, source, state.t_h)
    if j is not None:
        rhs = rhs - j
    e = state.e + dt * rhs / sys.M_eps.diagonal
    h = state.h - dt * sys.C.apply(e, ledger, "leapfrog_curl") / sys.M_mu.diagonal
    if not (np.isfinite(e).all() and np.isfinite(h).all()):
        raise IntegrationDiverged(f"non-finite fields after step {state.m + 1}")
    return FieldState(e, h, state.m + 1, dt, state.t0)


def initial_half_step(sys: DiscreteSystem, e0, h0, dt: float,
                      ledger: CostLedger | None = None) -> np.ndarray:
    """h^(1/2) from h^(0) by a half h-update (one extra curl SMVP)."""
    return h0 - 0.5 * dt * sys.C.apply(e0, ledger, "leapfrog_curl") / sys.M_mu.diagonal


@dataclass
class LeapfrogRun:
    """Samples of one Leapfrog run.

    e_probe[k] holds e at step k (k = 0..n), h_probe[k] holds h at step
    k + 1/2. ``fields[m]`` keeps (e^(m), h^(m-1/2), h^(m+1/2)) for the
    requested steps; h^(-1/2) is unknown and stored as None.
    """

    t0: float
    dt: float
    n_steps: int
    e_probe: np.ndarray
    h_probe: np.ndarray
    final: FieldState
    h_before_final: np.ndarray
    fields: dict = field(default_factory=dict)
    energy: np.ndarray = None

    @property
    def t_e(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_steps + 1)

    @property
    def t_h(self) -> np.ndarray:
        return self.t0 + self.dt * (np.arange(self.n_steps + 1) + 0.5)

    def h_probe_at_e_times(self) -> np.ndarray:
        """h probes at integer steps 1..n from the two neighbouring half steps."""
        return 0.5 * (self.h_probe[:-1] + self.h_probe[1:])


def integrate(sys: DiscreteSystem, e0, h_half, t_a: float, n_steps: int, dt: float,
              source=None, probes_e=(), probes_h=(), field_steps=(),
              ledger: CostLedger | None = None, check_cfl: bool = True,
              record_energy: bool = False) -> LeapfrogRun:
    """Run ``n_steps`` Leapfrog steps from (e^(0), h^(1/2)) at time t_a.

    With ``record_energy`` the staggered energy W_e + W_h is kept for steps
    1 .. n-1 (entry m; entries 0 and n are NaN since a neighbour is missing).
    """
    if n_steps < 1:
        raise ValueError("need at least one step")
    if check_cfl:
        dt_cfl = system_cfl(sys)
        if dt > dt_cfl * (1 + 1e-12):
            warnings.warn(f"dt = {dt:.4g} s exceeds the CFL estimate {dt_cfl:.4g} s",
                          RuntimeWarning, stacklevel=2)
    probes_e = np.asarray(probes_e, dtype=int)
    probes_h = np.asarray(probes_h, dtype=int)
    field_steps = set(int(m) for m in field_steps)

    e_probe = np.empty((n_steps + 1, probes_e.size))
    h_probe = np.empty((n_steps + 1, probes_h.size))
    state = FieldState(np.array(e0, dtype=float), np.array(h_half, dtype=float), 0, dt, t_a)
    e_probe[0] = state.e[probes_e]
    h_probe[0] = state.h[probes_h]
    fields = {}
    if 0 in field_steps:
        fields[0] = (state.e.copy(), None, state.h.copy())
    h_prev = None
    energies = np.full(n_steps + 1, np.nan) if record_energy else None
    h_older = None
    for _ in range(n_steps):
        h_older, h_prev, e_prev = h_prev, state.h, state.e
        state = step(sys, state, source, ledger)
        if record_energy and h_older is not None:
            energies[state.m - 1] = sum(energy(sys, e_prev, state.e, h_older, h_prev))
        e_probe[state.m] = state.e[probes_e]
        h_probe[state.m] = state.h[probes_h]
        if state.m in field_steps:
            fields[state.m] = (state.e.copy(), h_prev.copy(), state.h.copy())
    return LeapfrogRun(t_a, dt, n_steps, e_probe, h_probe, state, h_prev, fields, energies)


def energy(sys: DiscreteSystem, e_m, e_m1, h_prev, h_next):
    """Staggered discrete energies (W_e, W_h) at step m, in joules.

    Arguments are e^(m), e^(m+1), h^(m-1/2), h^(m+1/2). The electric part
    pairs e^(m) with e^(m+1/2) := (e^(m) + e^(m+1))/2, the magnetic part
    pairs h^(m) := (h^(m-1/2) + h^(m+1/2))/2 with h^(m+1/2). Their sum is
    invariant under source-free Leapfrog steps.
    """
    me = sys.M_eps.diagonal
    mm = sys.M_mu.diagonal
    w_e = float(e_m @ (me * (0.5 * (e_m + e_m1))))
    w_h = float((0.5 * (h_prev + h_next)) @ (mm * h_next))
    return w_e, w_h
