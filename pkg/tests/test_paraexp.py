import numpy as np
import pytest
from hypothesis import given, strategies as st

from paraexp_em.expm import ExpmOverflow, expm_action, select_parameters, estimate_norm
from paraexp_em.fitgrid import StaggeredGrid
from paraexp_em.leapfrog import system_cfl
from paraexp_em.paraexp import (Partition, ParaExpError, make_partition, reconstruct, run,
                                serial_leapfrog)
from paraexp_em.system import assemble, center_line_source, evaluate_source

from conftest import random_state


def test_single_interval_partition():
    part = make_partition((0.0, 2e-7), 1, 1e-9)
    assert part.steps == (200,) and np.allclose(part.boundaries, [0.0, 2e-7])


def test_uniform_boundaries():
    part = make_partition((0.0, 2e-7), 4, 1e-9)
    assert np.allclose(part.boundaries, [0.0, 5e-8, 1e-7, 1.5e-7, 2e-7], rtol=1e-14)
    assert part.t_end == pytest.approx(2e-7)


def test_residual_steps_go_last():
    part = make_partition((0.0, 103e-9), 4, 1e-9)
    assert part.steps == (25, 25, 25, 28) and part.n_t == 103


def test_partition_errors():
    with pytest.raises(ValueError):
        make_partition((0.0, 3e-9), 4, 1e-9)
    with pytest.raises(ValueError):
        make_partition((0.0, 1e-8), 0, 1e-9)
    with pytest.raises(ValueError):
        make_partition((0.0, 1.05e-8), 2, 1e-9)
    with pytest.raises(ValueError):
        make_partition((0.0, 1e-8), 2, 1e-9, mode="adaptive")
    with pytest.raises(ValueError):
        Partition(0.0, 1e-9, (3, 0))


def test_sample_ownership():
    part = Partition(0.0, 1.0, (3, 3, 4))
    assert [part.owner_of_e(m) for m in range(11)] == [0, 0, 0, 0, 1, 1, 1, 2, 2, 2, 2]
    assert [part.owner_of_h(m) for m in range(10)] == [0, 0, 0, 1, 1, 1, 2, 2, 2, 2]


@pytest.fixture(scope="module")
def setting(small_system):
    dt = 0.9 * system_cfl(small_system)
    return small_system, dt, list(small_system.source.support) + [20, 80], [10, 60, 90]


def test_homogeneous_case_is_pure_exponential(free_system):
    sys = free_system
    u0 = random_state(sys, 4)
    dt = 0.5 * system_cfl(sys)
    part = make_partition((0.0, 12 * dt), 3, dt)
    probes = np.flatnonzero(sys.active_e)[:5]
    res = run(sys, u0, part, eps_A=1e-10, probes_e=probes, threads=0)
    bound = estimate_norm(sys.A).value
    for k, m in enumerate(res.e_steps):
        if m == 0:
            w = u0
        else:
            w = expm_action(sys.A, u0, m * dt, select_parameters("leja", m * dt, bound, 1e-10))
        e = w[sys.e_slice] / np.sqrt(sys.M_eps.diagonal)
        assert np.allclose(res.e_probe[k], e[probes], rtol=1e-8, atol=1e-8 * abs(e).max())


def test_one_interval_zero_data_equals_serial(setting):
    sys, dt, pe, ph = setting
    part = make_partition((0.0, 40 * dt), 1, dt)
    res = run(sys, None, part, probes_e=pe, probes_h=ph, threads=0)
    ser = serial_leapfrog(sys, None, 40, dt, probes_e=pe, probes_h=ph)
    assert np.array_equal(res.e_probe, ser.e_probe) and np.array_equal(res.h_probe, ser.h_probe)
    assert res.ledger["expm_poly"] == 0 and res.tracks == []


@pytest.mark.parametrize("p", [2, 3, 7])
def test_splitting_identity(setting, p):
    sys, dt, pe, ph = setting
    n = 42
    u0 = random_state(sys, 9)
    part = make_partition((0.0, n * dt), p, dt)
    res = run(sys, u0, part, probes_e=pe, probes_h=ph, field_steps=[n], propagator="leapfrog", threads=0)
    ser = serial_leapfrog(sys, u0, n, dt, probes_e=pe, probes_h=ph, field_steps=[n])
    scale = abs(ser.e_probe).max()
    assert np.allclose(res.e_probe, ser.e_probe, rtol=0, atol=1e-12 * scale)
    assert np.allclose(res.h_probe, ser.h_probe, rtol=0, atol=1e-12 * abs(ser.h_probe).max())
    assert np.allclose(res.e_fields[n], ser.e_fields[n], rtol=0, atol=1e-12 * abs(ser.e_fields[n]).max())


def test_threads_do_not_change_bits(setting):
    sys, dt, pe, ph = setting
    part = make_partition((0.0, 60 * dt), 5, dt)
    u0 = random_state(sys, 2)
    a = run(sys, u0, part, probes_e=pe, probes_h=ph, threads=0)
    b = run(sys, u0, part, probes_e=pe, probes_h=ph, threads=None)
    c = run(sys, u0, part, probes_e=pe, probes_h=ph, threads=2)
    for other in (b, c):
        assert np.array_equal(a.e_probe, other.e_probe) and np.array_equal(a.h_probe, other.h_probe)
        assert a.ledger.as_dict() == other.ledger.as_dict()


def test_ledger_identity(setting):
    sys, dt, pe, _ = setting
    part = make_partition((0.0, 60 * dt), 4, dt)
    res = run(sys, None, part, probes_e=pe, threads=0)
    led = res.ledger
    assert led.c_lf == 2 * 60
    assert led["transform"] == 2 * (part.p - 1)
    assert led.n_leja == max(w["expm_poly"] for w in led.workers.values())
    assert led["expm_poly"] == sum(w["expm_poly"] for w in led.workers.values())
    assert res.effective_cost == 2 * 60 / 4 + led.n_leja + 2
    # the worker that owns the last interval carries no track of its own
    assert led.workers[part.p - 1]["expm_poly"] == 0


def test_eps_auto_uses_balance(setting):
    sys, dt, pe, _ = setting
    part = make_partition((0.0, 8 * dt), 2, dt)
    with pytest.warns(RuntimeWarning):
        res = run(sys, None, part, eps_A="auto", probes_e=pe, threads=0)
    assert res.eps_A == 1e-14


def test_boundary_outputs_only(setting):
    sys, dt, pe, ph = setting
    part = make_partition((0.0, 40 * dt), 4, dt)
    every = run(sys, None, part, probes_e=pe, threads=0, eps_A=1e-10)
    sparse = run(sys, None, part, probes_e=pe, e_steps=part.starts, h_steps=[], threads=0, eps_A=1e-10)
    assert np.allclose(sparse.e_probe, every.e_probe[part.starts], rtol=0,
                       atol=1e-8 * abs(every.e_probe).max())
    assert sparse.ledger["expm_poly"] < every.ledger["expm_poly"]


def test_failure_carries_interval(setting):
    sys, dt, pe, _ = setting
    part = make_partition((0.0, 12 * dt), 3, dt)

    def broken(b, t, ledger):
        raise ExpmOverflow("boom")
    with pytest.raises(ParaExpError) as info:
        run(sys, None, part, probes_e=pe, propagator=broken, threads=0)
    assert info.value.interval == 0


def test_unknown_propagator(setting):
    sys, dt, _, _ = setting
    with pytest.raises(ValueError):
        run(sys, None, make_partition((0.0, 4 * dt), 2, dt), propagator="pade")


def test_missing_track_sample_fails_loudly(setting):
    sys, dt, pe, _ = setting
    part = make_partition((0.0, 8 * dt), 2, dt)
    res = run(sys, None, part, probes_e=pe, threads=0)
    track = res.tracks[0]
    track.e_steps = track.e_steps[:-1]
    particulars = [{"e_steps": np.arange(0, 5), "h_steps": np.arange(0, 4),
                    "e_probe": np.zeros((5, len(pe))), "h_probe": np.zeros((4, 0))},
                   {"e_steps": np.arange(5, 9), "h_steps": np.arange(4, 8),
                    "e_probe": np.zeros((4, len(pe))), "h_probe": np.zeros((4, 0))}]
    with pytest.raises(AssertionError):
        reconstruct(sys, part, particulars, [track], np.arange(9), np.arange(8), pe, [])


def test_superposition_against_variation_of_constants():
    grid = StaggeredGrid.uniform((20.0, 20.0, 1.0), (5, 5, 2))
    sys = assemble(grid, source=center_line_source(grid, "gaussian_pulse", sigma_t=2e-8))
    A = sys.A.toarray()
    lam, V = np.linalg.eig(A)
    Vi = np.linalg.inv(V)
    g = evaluate_source(sys, 2e-8) / sys.source.current(2e-8)
    x, w = np.polynomial.legendre.leggauss(400)
    probe = sys.source.support[0]

    def oracle(t):
        # u(t) = int_0^t exp((t - s) A) g(s) ds, eigenwise with Gauss-Legendre
        s, ws = 0.5 * t * (x + 1), 0.5 * t * w
        cur = np.array([sys.source.current(si) for si in s])
        u = (V @ ((np.exp(np.outer(lam, t - s)) * cur * ws).sum(1) * (Vi @ g))).real
        return u[sys.e_slice][probe] / np.sqrt(sys.M_eps.diagonal[probe])

    T = 1e-7
    n_cfl = int(np.ceil(T / system_cfl(sys)))
    errs = []
    for f in (10, 20):
        n = n_cfl * f
        dt = T / n
        res = run(sys, None, make_partition((0.0, T), 4, dt), eps_A=1e-10, probes_e=[probe], threads=0)
        ref = np.array([oracle(t) if t > 0 else 0.0 for t in res.t_e])
        err = np.linalg.norm(res.e_probe[:, 0] - ref) / np.linalg.norm(ref)
        ser = serial_leapfrog(sys, None, n, dt, probes_e=[probe])
        assert err <= np.linalg.norm(ser.e_probe[:, 0] - ref) / np.linalg.norm(ref)
        errs.append(err)
    assert errs[0] <= 2e-4
    assert 3.2 <= errs[0] / errs[1] <= 4.8


@given(st.integers(2, 6), st.integers(0, 1000))
def test_linearity_in_initial_data(p, seed):
    grid = StaggeredGrid.uniform((4.0, 4.0, 1.0), (4, 4, 2))
    sys = assemble(grid)
    dt = 0.8 * system_cfl(sys)
    part = make_partition((0.0, 3 * p * dt), p, dt)
    probes = np.flatnonzero(sys.active_e)
    a, b = random_state(sys, seed), random_state(sys, seed + 1)
    ra = run(sys, a, part, probes_e=probes, threads=0, eps_A=1e-8)
    rb = run(sys, b, part, probes_e=probes, threads=0, eps_A=1e-8)
    rab = run(sys, a + b, part, probes_e=probes, threads=0, eps_A=1e-8)
    scale = abs(rab.e_probe).max()
    assert np.allclose(rab.e_probe, ra.e_probe + rb.e_probe, rtol=0, atol=1e-6 * scale)
