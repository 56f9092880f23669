"""ParaExp: split a linear inhomogeneous problem into parallel pieces.

The interval (t0, t_end] is cut into p pieces. On each piece a worker
solves the inhomogeneous problem from zero initial data with Leapfrog (the
particular solution v_j), then carries the end state v_j(T_j) forward to
t_end with the matrix exponential (a homogeneous track). The solution at
any sample time is the particular solution of the piece that owns it plus
every track seeded at or before the start of that piece.

Indices are 0-based: worker j owns steps (S_j, S_j + n_j]; track b is
seeded at boundary T_b, so track 0 carries u0 and track b >= 1 carries the
end state of interval b - 1.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .expm import ExpmOverflow, ExpmPropagator, estimate_norm, optimal_tolerance
from .leapfrog import FieldState, initial_half_step, integrate, step
from .ledger import CostLedger
from .system import DiscreteSystem, SourceSignal

PROPAGATORS = ("leja", "taylor", "krylov_ref", "leapfrog")


class ParaExpError(RuntimeError):
    """A worker failed; ``interval`` names the 0-based interval index."""

    def __init__(self, interval: int, cause: Exception):
        super().__init__(f"interval {interval}: {cause}")
        self.interval = interval
        self.cause = cause


# --------------------------------------------------------------------------
# partition


@dataclass(frozen=True)
class Partition:
    t0: float
    dt: float
    steps: tuple

    def __post_init__(self):
        if len(self.steps) < 1 or any(int(n) < 1 for n in self.steps):
            raise ValueError("every interval needs at least one step")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        object.__setattr__(self, "steps", tuple(int(n) for n in self.steps))

    @property
    def p(self) -> int:
        return len(self.steps)

    @property
    def n_t(self) -> int:
        return sum(self.steps)

    @property
    def starts(self) -> np.ndarray:
        """Global step index S_j at which interval j begins (length p + 1)."""
        return np.concatenate(([0], np.cumsum(self.steps)))

    @property
    def boundaries(self) -> np.ndarray:
        return self.t0 + self.dt * self.starts

    @property
    def t_end(self) -> float:
        return float(self.boundaries[-1])

    def owner_of_e(self, m: int) -> int:
        """Interval holding e at step m; m = 0 belongs to the first one."""
        if m == 0:
            return 0
        return int(np.searchsorted(self.starts, m, side="left")) - 1

    def owner_of_h(self, m: int) -> int:
        """Interval holding h at step m + 1/2."""
        return int(np.searchsorted(self.starts, m, side="right")) - 1


def make_partition(interval, p: int, dt: float, mode: str = "uniform") -> Partition:
    """Split (t0, t_end] into p runs of whole steps; leftovers go to the last run."""
    if mode != "uniform":
        raise ValueError(f"unsupported partition mode {mode!r}")
    t0, t_end = map(float, interval)
    if p < 1:
        raise ValueError("p must be at least 1")
    if not dt > 0 or not t_end > t0:
        raise ValueError("need dt > 0 and t_end > t0")
    n_t = int(round((t_end - t0) / dt))
    if not math.isclose(n_t * dt, t_end - t0, rel_tol=1e-9):
        raise ValueError("interval length is not a multiple of dt")
    if n_t < p:
        raise ValueError(f"{n_t} steps cannot be split over {p} intervals")
    base = n_t // p
    steps = [base] * p
    steps[-1] += n_t - base * p
    return Partition(t0, dt, tuple(steps))


# --------------------------------------------------------------------------
# trajectories


@dataclass
class Trajectory:
    """Staggered samples of a run: e at integer steps, h at half steps.

    ``e_probe[k, i]`` is e[probes_e[i]] at step e_steps[k]; ``h_probe[k, i]``
    is h[probes_h[i]] at step h_steps[k] + 1/2. Full fields are kept only for
    the steps listed in ``e_fields`` and ``h_fields``.
    """

    t0: float
    dt: float
    e_steps: np.ndarray
    h_steps: np.ndarray
    probes_e: np.ndarray
    probes_h: np.ndarray
    e_probe: np.ndarray
    h_probe: np.ndarray
    e_fields: dict = field(default_factory=dict)
    h_fields: dict = field(default_factory=dict)
    ledger: CostLedger = field(default_factory=CostLedger)

    @property
    def t_e(self) -> np.ndarray:
        return self.t0 + self.dt * self.e_steps

    @property
    def t_h(self) -> np.ndarray:
        return self.t0 + self.dt * (self.h_steps + 0.5)


@dataclass
class HomogeneousTrack:
    """Samples of w_b(t) = exp((t - T_b) A) seed in normalized variables."""

    index: int
    owner: int
    start_step: int
    seed: np.ndarray
    e_steps: np.ndarray
    h_steps: np.ndarray
    e_probe: np.ndarray
    h_probe: np.ndarray
    e_fields: dict = field(default_factory=dict)
    h_fields: dict = field(default_factory=dict)


@dataclass
class ParaExpResult(Trajectory):
    partition: Partition = None
    eps_A: float = None
    spectral_bound: float = None
    propagator: str = None
    tracks: list = field(default_factory=list)

    @property
    def effective_cost(self) -> float:
        return 2.0 * self.partition.n_t / self.partition.p + self.ledger.n_leja + 2


# --------------------------------------------------------------------------
# helpers


def _normalize_steps(steps, lo: int, hi: int, name: str) -> np.ndarray:
    arr = np.unique(np.asarray(steps, dtype=int))
    if arr.size and (arr[0] < lo or arr[-1] > hi):
        raise ValueError(f"{name} outside [{lo}, {hi}]")
    return arr


def _split(sys: DiscreteSystem, u):
    return u[sys.h_slice], u[sys.e_slice]


def _resolve_source(sys, source):
    return sys.source if source is None else source


def serial_leapfrog(sys: DiscreteSystem, u0, n_t: int, dt: float, t0: float = 0.0,
                    probes_e=(), probes_h=(), e_steps=None, h_steps=None,
                    field_steps=(), source=None, ledger: CostLedger | None = None) -> Trajectory:
    """Plain Leapfrog over n_t steps from normalized u0 (None for zero data).

    ``field_steps`` keeps e at step m together with h at m - 1/2 and m + 1/2.
    """
    ledger = CostLedger() if ledger is None else ledger
    e_steps = np.arange(n_t + 1) if e_steps is None else _normalize_steps(e_steps, 0, n_t, "e_steps")
    h_steps = np.arange(n_t) if h_steps is None else _normalize_steps(h_steps, 0, n_t - 1, "h_steps")
    e0, h_half = _initial_leapfrog_state(sys, u0, dt, ledger)
    run = integrate(sys, e0, h_half, t0, n_t, dt, _resolve_source(sys, source),
                    probes_e, probes_h, field_steps, ledger)
    e_fields, h_fields = {}, {}
    for m, (e, h_prev, h_next) in run.fields.items():
        e_fields[m] = e
        if h_prev is not None:
            h_fields[m - 1] = h_prev
        h_fields[m] = h_next
    return Trajectory(t0, dt, e_steps, h_steps, np.asarray(probes_e, int), np.asarray(probes_h, int),
                      run.e_probe[e_steps], run.h_probe[h_steps], e_fields, h_fields, ledger)


def _initial_leapfrog_state(sys, u0, dt, ledger):
    if u0 is None:
        return np.zeros(sys.n_dof), np.zeros(sys.n_dof)
    h0, e0 = _split(sys, np.asarray(u0, dtype=float) / sys.t_diag)
    return e0, initial_half_step(sys, e0, h0, dt, ledger)


# --------------------------------------------------------------------------
# workers


def _particular(sys, part: Partition, j: int, source, probes_e, probes_h,
                e_steps, h_steps, field_e, field_h, ledger):
    """Leapfrog on interval j from zero data; returns samples and the end state."""
    S = int(part.starts[j])
    n = part.steps[j]
    t_a = part.t0 + S * part.dt
    lo_e = 0 if j == 0 else S + 1
    mine_e = e_steps[(e_steps >= lo_e) & (e_steps <= S + n)]
    mine_h = h_steps[(h_steps >= S) & (h_steps < S + n)]
    fe = [m for m in field_e if lo_e <= m <= S + n]
    fh = [m for m in field_h if S <= m < S + n]
    local = sorted({m - S for m in fe} | {m - S for m in fh})
    zero = np.zeros(sys.n_dof)
    run = integrate(sys, zero, zero, t_a, n, part.dt, source, probes_e, probes_h, local, ledger)
    out = {
        "e_steps": mine_e, "h_steps": mine_h,
        "e_probe": run.e_probe[mine_e - S], "h_probe": run.h_probe[mine_h - S],
        "e_fields": {m: run.fields[m - S][0] for m in fe},
        "h_fields": {m: run.fields[m - S][2] for m in fh},
        "end": (run.final.e, run.h_before_final, run.final.h),
    }
    return out


def _sample_plan(start: int, last: int, e_steps, h_steps, include_seed: bool):
    """Sorted events (half-step clock, kind, step) strictly after the seed."""
    ev = [(2 * m, "e", m) for m in e_steps if start < m <= last]
    if include_seed and start in set(e_steps.tolist()):
        ev.append((2 * start, "e", start))
    ev += [(2 * m + 1, "h", m) for m in h_steps if start <= m < last]
    return sorted(ev)


def _exp_track(sys, prop, b, owner, seed, start, last, e_steps, h_steps,
               probes_e, probes_h, field_e, field_h, dt, ledger):
    events = _sample_plan(start, last, e_steps, h_steps, include_seed=(b == 0))
    field_e, field_h = set(field_e), set(field_h)
    es, ep, hs, hp, ef, hf = [], [], [], [], {}, {}
    w = seed
    clock = 2 * start
    for k, kind, m in events:
        if k > clock:
            w = prop(w, (k - clock) * 0.5 * dt, ledger)
            clock = k
        h, e = _split(sys, w)
        if kind == "e":
            es.append(m)
            ep.append(e[probes_e])
            if m in field_e:
                ef[m] = e.copy()
        else:
            hs.append(m)
            hp.append(h[probes_h])
            if m in field_h:
                hf[m] = h.copy()
    return HomogeneousTrack(b, owner, start, seed, np.array(es, int), np.array(hs, int),
                            np.array(ep).reshape(len(es), len(probes_e)),
                            np.array(hp).reshape(len(hs), len(probes_h)), ef, hf)


def _leapfrog_track(sys, b, owner, e_start, h_start, start, last, e_steps, h_steps,
                    probes_e, probes_h, field_e, field_h, dt, ledger):
    """Source-free Leapfrog continuation; samples stored in normalized variables."""
    se, sh = np.sqrt(sys.M_eps.diagonal), np.sqrt(sys.M_mu.diagonal)
    want_e = set(m for m in e_steps if start < m <= last) | ({start} if b == 0 and start in set(e_steps.tolist()) else set())
    want_h = set(m for m in h_steps if start <= m < last)
    field_e, field_h = set(field_e), set(field_h)
    es, ep, hs, hp, ef, hf = [], [], [], [], {}, {}
    state = FieldState(e_start.copy(), h_start.copy(), start, dt)
    zero = SourceSignal()
    while True:
        m = state.m
        if m in want_e:
            es.append(m)
            ep.append((se * state.e)[probes_e])
            if m in field_e:
                ef[m] = se * state.e
        if m in want_h:
            hs.append(m)
            hp.append((sh * state.h)[probes_h])
            if m in field_h:
                hf[m] = sh * state.h
        if m >= last:
            break
        state = step(sys, state, zero, ledger)
    seed = np.concatenate([sh * h_start, se * e_start])
    return HomogeneousTrack(b, owner, start, seed, np.array(es, int), np.array(hs, int),
                            np.array(ep).reshape(len(es), len(probes_e)),
                            np.array(hp).reshape(len(hs), len(probes_h)), ef, hf)


# --------------------------------------------------------------------------
# driver


def run(sys: DiscreteSystem, u0, partition: Partition, dt: float | None = None,
        eps_A: float | str = 1e-2, probes_e=(), probes_h=(), e_steps=None, h_steps=None,
        field_steps=(), propagator: str | Callable = "leja", beta: float = 1.0,
        spectral_bound: float | None = None, threads: int | None = None,
        source=None) -> ParaExpResult:
    """ParaExp over ``partition`` from normalized initial data u0 (None for zero).

    ``e_steps`` / ``h_steps`` select output samples (default: every step);
    ``field_steps`` keeps full fields of e at m and h at m -/+ 1/2.
    ``propagator`` is one of "leja", "taylor", "krylov_ref", "leapfrog", or
    a callable (b, t, ledger) -> exp(tA) b. ``eps_A="auto"`` picks
    beta dt^2 / ||A||_2. ``threads=None`` runs one thread per interval,
    ``threads=0`` runs the workers in the calling thread.
    """
    dt = partition.dt if dt is None else float(dt)
    if not math.isclose(dt, partition.dt, rel_tol=1e-12):
        raise ValueError("dt does not match the partition")
    n_t, p = partition.n_t, partition.p
    source = _resolve_source(sys, source)
    probes_e = np.asarray(probes_e, dtype=int)
    probes_h = np.asarray(probes_h, dtype=int)
    e_steps = np.arange(n_t + 1) if e_steps is None else _normalize_steps(e_steps, 0, n_t, "e_steps")
    h_steps = np.arange(n_t) if h_steps is None else _normalize_steps(h_steps, 0, n_t - 1, "h_steps")
    field_e = sorted(int(m) for m in field_steps)
    field_h = sorted({m - 1 for m in field_e if m >= 1} | {m for m in field_e if m < n_t})

    coordinator = CostLedger()
    prop = None
    if callable(propagator):
        prop_name = getattr(propagator, "__name__", "custom")
        prop = propagator
        eps_val = float(eps_A) if not isinstance(eps_A, str) else float("nan")
        bound = spectral_bound
    elif propagator in ("leja", "taylor", "krylov_ref"):
        prop_name = propagator
        bound = spectral_bound or estimate_norm(sys.A, coordinator).value
        eps_val = optimal_tolerance(dt, beta, bound) if eps_A == "auto" else float(eps_A)
        if propagator == "krylov_ref":
            prop = _krylov_propagator(sys.A)
        else:
            ep = ExpmPropagator(sys.A, propagator, eps_val, bound)
            prop = lambda b, t, ledger: ep(b, t, ledger)  # noqa: E731
    elif propagator == "leapfrog":
        prop_name, bound, eps_val = "leapfrog", spectral_bound, float("nan")
    else:
        raise ValueError(f"unknown propagator {propagator!r}")
    u0 = None if u0 is None else np.asarray(u0, dtype=float)
    has_u0 = u0 is not None and np.any(u0 != 0)

    def worker(j):
        led = CostLedger()
        try:
            part = _particular(sys, partition, j, source, probes_e, probes_h,
                               e_steps, h_steps, field_e, field_h, led)
            tracks = []
            last = n_t
            if j < p - 1:
                b = j + 1
                start = int(partition.starts[b])
                e_end, h_prev, h_next = part["end"]
                if prop_name == "leapfrog":
                    tracks.append(_leapfrog_track(sys, b, j, e_end, h_next, start, last, e_steps, h_steps,
                                                  probes_e, probes_h, field_e, field_h, dt, led))
                else:
                    # h at T_b from the two neighbouring half steps
                    seed = np.concatenate([0.5 * (h_prev + h_next), e_end]) * sys.t_diag
                    led.add("transform")
                    tracks.append(_exp_track(sys, prop, b, j, seed, start, last, e_steps, h_steps,
                                             probes_e, probes_h, field_e, field_h, dt, led))
                # extraction of the track samples back to grid voltages
                led.add("transform")
            if j == p - 1 and has_u0:
                if prop_name == "leapfrog":
                    e0, h_half = _initial_leapfrog_state(sys, u0, dt, led)
                    tracks.append(_leapfrog_track(sys, 0, j, e0, h_half, 0, last, e_steps, h_steps,
                                                  probes_e, probes_h, field_e, field_h, dt, led))
                else:
                    tracks.append(_exp_track(sys, prop, 0, j, u0.copy(), 0, last, e_steps, h_steps,
                                             probes_e, probes_h, field_e, field_h, dt, led))
            return part, tracks, led
        except ExpmOverflow as exc:
            raise ParaExpError(j, exc) from exc

    if threads == 0:
        outputs = [worker(j) for j in range(p)]
    else:
        with ThreadPoolExecutor(max_workers=threads or p) as pool:
            outputs = list(pool.map(worker, range(p)))

    ledger = coordinator
    particulars = []
    tracks = []
    for j, (part, trk, led) in enumerate(outputs):
        ledger.attach_worker(j, led)
        particulars.append(part)
        tracks.extend(trk)
    tracks.sort(key=lambda tr: tr.index)

    e_probe, h_probe, e_fields, h_fields = reconstruct(sys, partition, particulars, tracks, e_steps,
                                                       h_steps, probes_e, probes_h, field_e, field_h)
    return ParaExpResult(partition.t0, dt, e_steps, h_steps, probes_e, probes_h, e_probe, h_probe,
                         e_fields, h_fields, ledger, partition=partition, eps_A=eps_val,
                         spectral_bound=bound, propagator=prop_name, tracks=tracks)


def _krylov_propagator(A, dim: int = 60):
    from .expm import krylov_reference

    def prop(b, t, ledger):
        return krylov_reference(A, b, t, min(dim, b.size), ledger)[0]
    return prop


def reconstruct(sys: DiscreteSystem, partition: Partition, particulars, tracks,
                e_steps, h_steps, probes_e, probes_h, field_e=(), field_h=()):
    """Total staggered samples: particular part plus transformed track sums.

    Tracks are summed in increasing seed order so the result does not
    depend on how the workers were scheduled. Raises if a track that should
    cover a sample has none.
    """
    se = np.sqrt(sys.M_eps.diagonal)
    sh = np.sqrt(sys.M_mu.diagonal)
    e_rows, h_rows = [], []
    e_fields, h_fields = {}, {}
    e_pos = [{m: k for k, m in enumerate(tr.e_steps)} for tr in tracks]
    h_pos = [{m: k for k, m in enumerate(tr.h_steps)} for tr in tracks]
    part_e = [{m: k for k, m in enumerate(pt["e_steps"])} for pt in particulars]
    part_h = [{m: k for k, m in enumerate(pt["h_steps"])} for pt in particulars]
    order = sorted(range(len(tracks)), key=lambda i: tracks[i].index)

    def covering(j):
        return [i for i in order if tracks[i].index <= j]

    for m in e_steps:
        j = partition.owner_of_e(int(m))
        k = part_e[j].get(int(m))
        if k is None:
            raise AssertionError(f"particular solution {j} lacks e at step {m}")
        acc = None
        fld = None
        for i in covering(j):
            pos = e_pos[i].get(int(m))
            if pos is None:
                raise AssertionError(f"track {tracks[i].index} lacks e at step {m}")
            val = tracks[i].e_probe[pos]
            acc = val if acc is None else acc + val
            if m in field_e:
                f = tracks[i].e_fields[int(m)]
                fld = f if fld is None else fld + f
        row = particulars[j]["e_probe"][k]
        if acc is not None:
            row = row + acc / se[probes_e]
        e_rows.append(row)
        if m in field_e:
            base = particulars[j]["e_fields"][int(m)]
            e_fields[int(m)] = base + fld / se if fld is not None else base.copy()

    for m in h_steps:
        j = partition.owner_of_h(int(m))
        k = part_h[j].get(int(m))
        if k is None:
            raise AssertionError(f"particular solution {j} lacks h at step {m} + 1/2")
        acc = None
        fld = None
        for i in covering(j):
            pos = h_pos[i].get(int(m))
            if pos is None:
                raise AssertionError(f"track {tracks[i].index} lacks h at step {m} + 1/2")
            val = tracks[i].h_probe[pos]
            acc = val if acc is None else acc + val
            if m in field_h:
                f = tracks[i].h_fields[int(m)]
                fld = f if fld is None else fld + f
        row = particulars[j]["h_probe"][k]
        if acc is not None:
            row = row + acc / sh[probes_h]
        h_rows.append(row)
        if m in field_h:
            base = particulars[j]["h_fields"][int(m)]
            h_fields[int(m)] = base + fld / sh if fld is not None else base.copy()

    return (np.array(e_rows).reshape(len(e_rows), len(probes_e)),
            np.array(h_rows).reshape(len(h_rows), len(probes_h)), e_fields, h_fields)
