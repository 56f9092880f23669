"""Cost accounting, energy traces, spectra and cost sweeps."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .expm import estimate_norm, expm_action, select_parameters
from .ledger import CATEGORIES, CostLedger
from .problems import WAVE2D, snapped_steps, wave2d
from .leapfrog import system_cfl
from .system import DiscreteSystem

__all__ = ["CATEGORIES", "CostLedger", "ProbeTrace", "effective_cost", "cost_ratio",
           "energy_trace", "spectrum", "band_mean", "probe_traces", "leja_propagation_cost",
           "uniform_cost_sweep", "nonuniform_cost_sweep"]


def effective_cost(ledger: CostLedger, p: int, n_t: int) -> float:
    """Effective SMVPs of a ParaExp run: (2/p) n_t + n_Leja + 2."""
    if p < 1 or n_t < 0:
        raise ValueError("need p >= 1 and n_t >= 0")
    return 2.0 * n_t / p + ledger.n_leja + 2


def cost_ratio(c_leja: float, c_lf: float) -> float:
    if c_lf <= 0:
        raise ValueError("Leapfrog cost must be positive")
    return c_leja / c_lf


@dataclass(frozen=True)
class ProbeTrace:
    location: int
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.shape != v.shape or t.ndim != 1:
            raise ValueError("times and values must be 1-D and of equal length")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise ValueError("sample times must be strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @property
    def uniform(self) -> bool:
        if self.times.size < 3:
            return True
        d = np.diff(self.times)
        return bool(np.allclose(d, d[0], rtol=1e-9, atol=0.0))

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])


def probe_traces(traj, kind: str = "e") -> list:
    """One ProbeTrace per probe of a trajectory (e at integer, h at half steps)."""
    if kind == "e":
        return [ProbeTrace(int(p), traj.t_e, traj.e_probe[:, i]) for i, p in enumerate(traj.probes_e)]
    if kind == "h":
        return [ProbeTrace(int(p), traj.t_h, traj.h_probe[:, i]) for i, p in enumerate(traj.probes_h)]
    raise ValueError("kind is 'e' or 'h'")


def energy_trace(sys: DiscreteSystem, traj, form: str = "averaged"):
    """Energy samples (t, E) from the full fields stored in ``traj``.

    ``averaged``: E = <h, h>_mu + <e, e>_eps with h at integer steps taken as
    the mean of the neighbouring half-step values. Needs e at m and h at
    m -/+ 1/2.
    ``staggered``: the pairing W_e + W_h that Leapfrog conserves exactly.
    Needs e at m and m + 1 and h at m -/+ 1/2.
    """
    me = sys.M_eps.diagonal
    mm = sys.M_mu.diagonal
    ts, Es = [], []
    for m in sorted(traj.e_fields):
        if m - 1 not in traj.h_fields or m not in traj.h_fields:
            continue
        e = traj.e_fields[m]
        h_prev, h_next = traj.h_fields[m - 1], traj.h_fields[m]
        if form == "averaged":
            h = 0.5 * (h_prev + h_next)
            E = float(h @ (mm * h) + e @ (me * e))
        elif form == "staggered":
            if m + 1 not in traj.e_fields:
                continue
            e1 = traj.e_fields[m + 1]
            E = float(e @ (me * 0.5 * (e + e1)) + (0.5 * (h_prev + h_next)) @ (mm * h_next))
        else:
            raise ValueError(f"unknown energy form {form!r}")
        ts.append(traj.t0 + m * traj.dt)
        Es.append(E)
    return np.array(ts), np.array(Es)


def spectrum(trace: ProbeTrace, window: str | None = None):
    """One-sided DFT magnitude (frequency in Hz, |X_k|) of a uniformly sampled trace."""
    if not trace.uniform:
        raise ValueError("spectrum needs uniform sampling")
    if trace.values.size < 2:
        raise ValueError("need at least two samples")
    x = trace.values
    if window == "hann":
        x = x * np.hanning(x.size)
    elif window is not None:
        raise ValueError(f"unknown window {window!r}")
    return np.fft.rfftfreq(x.size, trace.dt), np.abs(np.fft.rfft(x))


def band_mean(freq, mag, lo: float, hi: float = np.inf) -> float:
    sel = (freq > lo) & (freq <= hi)
    if not np.any(sel):
        raise ValueError("empty frequency band")
    return float(np.mean(mag[sel]))


# --------------------------------------------------------------------------
# cost sweeps


def leja_propagation_cost(sys: DiscreteSystem, t: float, eps_A: float = 1e-2, seed: int = 0) -> int:
    """Polynomial SMVPs to carry a state over a span t in one exponential action.

    The state is a fixed pseudo-random vector; with early termination the
    count can undercut the planned s*m only marginally.
    """
    bound = estimate_norm(sys.A).value
    plan = select_parameters("leja", t, bound, eps_A)
    ledger = CostLedger()
    u = np.random.default_rng(seed).standard_normal(sys.size)
    expm_action(sys.A, u, t, plan, ledger)
    return ledger["expm_poly"]


def uniform_cost_sweep(nxs, nts, interval=WAVE2D["interval"], eps_A: float = 1e-2):
    """Rows (nx, nt, smvp_leapfrog, smvp_leja) on square nx-by-nx meshes.

    Leapfrog uses the requested n_t unless that step violates the CFL
    estimate, in which case the CFL step count takes over.
    """
    rows = []
    span = interval[1] - interval[0]
    for nx in nxs:
        sys = wave2d(counts=(nx, nx, 2))
        n_cfl, _ = snapped_steps(interval, system_cfl(sys))
        c_leja = leja_propagation_cost(sys, span, eps_A)
        for nt in nts:
            rows.append((int(nx), int(nt), 2 * max(int(nt), n_cfl), c_leja))
    return rows


def nonuniform_cost_sweep(ks, counts=WAVE2D["counts"], interval=WAVE2D["interval"],
                          eps_A: float = 1e-2):
    """Rows (k, nt, smvp_leapfrog, smvp_leja, R) with one cell row/column shrunk by k."""
    rows = []
    span = interval[1] - interval[0]
    for k in ks:
        sys = wave2d(counts=counts, shrink=float(k))
        n_t, _ = snapped_steps(interval, system_cfl(sys))
        c_lf = 2 * n_t
        c_leja = leja_propagation_cost(sys, span, eps_A)
        rows.append((float(k), n_t, c_lf, c_leja, cost_ratio(c_leja, c_lf)))
    return rows
