"""Action of the matrix exponential, exp(tA) b, for large skew-symmetric A.

Two polynomial propagators share the same skeleton: scale the time step by
s, apply a degree-m polynomial P(tA/s) s times, stop a polynomial early
once the increments stall. Parameters are picked to minimize s*m subject
to a relative backward error ||dA|| <= eps_A ||A||.

* ``taylor``: truncated Taylor series; the backward error is bounded with
  the absolute power series of log(exp(-x) T_m(x)).
* ``leja``: Newton interpolation at Leja points on the imaginary segment
  i[-c, c]. Since A is normal, the backward error of P(X) equals the
  largest |log(exp(-z) P(z))| over the spectrum, which is bounded by
  sampling the scalar function along the segment.

A plain Arnoldi propagator is kept as a reference.
"""
from __future__ import annotations

import math
import os
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import NamedTuple

import mpmath
import numpy as np
import scipy.linalg

from .fitgrid import SparseOperator
from .ledger import CostLedger

TOLERANCE_FLOOR = 1e-14
LEJA_MARGIN = 1.05
M_MAX_LEJA = 100
# Taylor terms cancel badly on the imaginary axis past this degree
M_MAX_TAYLOR = 55


class ExpmOverflow(FloatingPointError):
    pass


def _apply(A, x, ledger, category):
    if isinstance(A, SparseOperator):
        return A.apply(x, ledger, category)
    if ledger is not None:
        ledger.add(category)
    return A @ x


def _transpose_apply(A, x, ledger, category):
    if isinstance(A, SparseOperator):
        if ledger is not None:
            ledger.add(category)
        return A.matrix.T @ x
    if ledger is not None:
        ledger.add(category)
    return A.T @ x


# --------------------------------------------------------------------------
# norm estimation


class NormEstimate(NamedTuple):
    value: float
    converged: bool
    iterations: int


def estimate_norm(A, ledger: CostLedger | None = None, rtol: float = 1e-6,
                  maxiter: int = 2000, seed: int = 0) -> NormEstimate:
    """Estimate ||A||_2 by power iteration on A^T A.

    Each iteration costs two SMVPs (booked as ``expm_norm``). Without
    convergence the Gershgorin bound max_i sum_j |a_ij| is returned with
    ``converged=False``.
    """
    n = A.shape[0]
    x = np.random.default_rng(seed).standard_normal(n)
    x /= np.linalg.norm(x)
    est = 0.0
    for it in range(1, maxiter + 1):
        y = _apply(A, x, ledger, "expm_norm")
        new = float(np.linalg.norm(y))
        if new == 0.0:
            return NormEstimate(0.0, True, it)
        z = _transpose_apply(A, y, ledger, "expm_norm")
        nz = np.linalg.norm(z)
        if nz == 0.0:
            return NormEstimate(new, True, it)
        x = z / nz
        if it > 1 and abs(new - est) <= rtol * new:
            return NormEstimate(new, True, it)
        est = new
    mat = A.matrix if isinstance(A, SparseOperator) else A
    gersh = float(np.max(np.asarray(abs(mat).sum(axis=1)).ravel()))
    warnings.warn("power iteration did not converge; using the Gershgorin bound",
                  RuntimeWarning, stacklevel=2)
    return NormEstimate(gersh, False, maxiter)


# --------------------------------------------------------------------------
# Leja points and divided differences


@lru_cache(maxsize=None)
def leja_points(count: int = M_MAX_LEJA + 1, n_candidates: int = 10001) -> np.ndarray:
    """Greedy Leja sequence on [-1, 1] chosen from a uniform candidate grid.

    The first point is +1; each next point maximizes the product of the
    distances to all previous ones. The nodes used for interpolation are
    i times these values.
    """
    cand = np.linspace(-1.0, 1.0, n_candidates)
    pts = [1.0]
    with np.errstate(divide="ignore"):
        logprod = np.log(np.abs(cand - 1.0))
        for _ in range(count - 1):
            k = int(np.argmax(logprod))
            pts.append(cand[k])
            logprod = logprod + np.log(np.abs(cand - cand[k]))
    out = np.array(pts)
    out.setflags(write=False)
    return out


def _dd_mp(a: float, xi: np.ndarray, dps: int) -> np.ndarray:
    with mpmath.workdps(dps):
        a_mp = mpmath.mpf(a)
        nodes = [mpmath.mpc(0, x) for x in xi]
        d = [mpmath.exp(a_mp * z) for z in nodes]
        n = len(nodes)
        for j in range(1, n):
            for i in range(n - 1, j - 1, -1):
                d[i] = (d[i] - d[i - 1]) / (nodes[i] - nodes[i - j])
        return np.array([complex(v) for v in d])


@lru_cache(maxsize=4096)
def leja_coefficients(a: float, m: int) -> np.ndarray:
    """Newton coefficients of z -> exp(a z) at the nodes i*xi_0 .. i*xi_m.

    The k-th coefficient is of size a^k / k! while the values it is formed
    from are of size one, so the differences are taken with mpmath at
    enough digits to absorb that cancellation and rounded at the end.
    """
    xi = leja_points()[: m + 1]
    if a == 0.0:
        return np.array([1.0 / math.factorial(k) for k in range(m + 1)], dtype=complex)
    loss = max(0.0, math.lgamma(m + 1) - m * math.log(a)) / math.log(10)
    out = _dd_mp(a, xi, 60 + int(loss) + int(a / math.log(10)))
    out.setflags(write=False)
    return out


_U_GRID = np.linspace(-1.0, 1.0, 2001)


def _leja_relative_errors(a: float, rho: float, m_max: int) -> np.ndarray:
    """Relative backward error max|log(exp(-z) q_k(z))| / rho for k = 0..m_max.

    q_k is the real-symmetrized degree-k interpolant (the real part of the
    complex Newton form applied to a real vector); z runs over i[-a, a].
    """
    c = leja_coefficients(a, m_max)
    xi = leja_points()
    y = 1j * _U_GRID
    exact = np.exp(-1j * a * _U_GRID)
    basis = np.ones_like(y)
    P = c[0] * basis
    out = np.empty(m_max + 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        for k in range(m_max + 1):
            if k > 0:
                basis = basis * (y - 1j * xi[k - 1])
                P = P + c[k] * basis
            q = 0.5 * (P + np.conj(P[::-1]))
            delta = np.log(q * exact)
            err = np.max(np.abs(delta))
            out[k] = err / rho if np.isfinite(err) else np.inf
    return out


_TABLE_VERSION = 2
_RHO_GRID = np.geomspace(1e-4, 160.0, 320)
_ROUNDING_ERR = 16 * np.finfo(float).eps


def _cache_path() -> Path:
    root = os.environ.get("XDG_CACHE_HOME") or os.path.join(os.path.expanduser("~"), ".cache")
    return Path(root) / "paraexp_em" / f"leja_table_v{_TABLE_VERSION}.npy"


@lru_cache(maxsize=1)
def _leja_error_table() -> np.ndarray:
    """rel_err[m, i] for degree m at rho = _RHO_GRID[i].

    Takes several seconds to build, so the result is also kept on disk.
    """
    path = _cache_path()
    try:
        table = np.load(path)
        if table.shape == (M_MAX_LEJA + 1, _RHO_GRID.size):
            return table
    except (OSError, ValueError):
        pass
    table = np.empty((M_MAX_LEJA + 1, _RHO_GRID.size))
    for i, rho in enumerate(_RHO_GRID):
        table[:, i] = _leja_relative_errors(LEJA_MARGIN * rho, rho, M_MAX_LEJA)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(f".{os.getpid()}.tmp.npy")
        np.save(tmp, table)
        os.replace(tmp, path)
    except OSError:
        pass
    return table


def _prefix_theta(rel_err_row: np.ndarray, eps: float) -> float:
    # absolute errors at rounding level are as good as it gets
    ok = (rel_err_row <= eps) | (rel_err_row * _RHO_GRID <= _ROUNDING_ERR)
    if not ok[0]:
        return 0.0
    bad = np.flatnonzero(~ok)
    last = (bad[0] - 1) if bad.size else ok.size - 1
    return float(_RHO_GRID[last])


@lru_cache(maxsize=256)
def leja_thetas(eps: float) -> np.ndarray:
    """Largest scaled spectral radius theta_m usable at degree m (0 if none)."""
    table = _leja_error_table()
    return np.array([_prefix_theta(table[m], eps) if m > 0 else 0.0
                     for m in range(M_MAX_LEJA + 1)])


# --------------------------------------------------------------------------
# Taylor backward-error bounds


@lru_cache(maxsize=None)
def _taylor_log_coeffs(m: int, n_terms: int = 150) -> tuple:
    """log10 |c_k| of log(exp(-x) T_m(x)) = sum_k c_k x^k, for k = m+1 .. m+n_terms."""
    N = m + n_terms
    with mpmath.workdps(60):
        F = [mpmath.mpf(0)] * (N + 1)
        F[0] = mpmath.mpf(1)
        for k in range(m + 1, N + 1):
            F[k] = (-1) ** (k + m) * mpmath.binomial(k - 1, m) / mpmath.factorial(k)
        L = [mpmath.mpf(0)] * (N + 1)
        for k in range(m + 1, N + 1):
            acc = k * F[k]
            for i in range(m + 1, k - m):
                acc -= i * L[i] * F[k - i]
            L[k] = acc / k
        return tuple(float(mpmath.log10(abs(L[k]))) if L[k] != 0 else -np.inf
                     for k in range(m + 1, N + 1))


@lru_cache(maxsize=4096)
def taylor_theta(m: int, eps: float) -> float:
    """Largest theta with sum_{k>m} |c_k| theta^(k-1) <= eps."""
    logc = np.array(_taylor_log_coeffs(m))
    powers = np.arange(m, m + logc.size)  # k - 1

    def bound(theta):
        vals = logc + powers * math.log10(theta)
        top = np.max(vals)
        return top + math.log10(np.sum(10.0 ** (vals - top)))

    target = math.log10(eps)
    lo, hi = 1e-12, 200.0
    if bound(lo) > target:
        return 0.0
    for _ in range(200):
        mid = math.sqrt(lo * hi)
        if bound(mid) <= target:
            lo = mid
        else:
            hi = mid
        if hi / lo < 1 + 1e-12:
            break
    return lo


# --------------------------------------------------------------------------
# parameter selection


@dataclass(frozen=True, eq=False)
class ExpmPlan:
    method: str
    m: int
    s: int
    c: float
    eps_A: float
    spectral_bound: float
    t: float
    predicted_cost: int
    coefficients: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.method not in ("taylor", "leja", "krylov_ref"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.m < 1 or self.s < 1:
            raise ValueError("m and s must be at least 1")
        if not 0.0 < self.eps_A < 1.0:
            raise ValueError("eps_A must lie in (0, 1)")
        if self.method == "taylor" and self.c != 0.0:
            raise ValueError("taylor plans have c = 0")


def _check_eps(eps_A: float) -> None:
    if not eps_A < 1.0:
        raise ValueError("eps_A must lie in (0, 1)")
    if eps_A <= 10 * np.finfo(float).eps:
        raise ValueError(f"eps_A = {eps_A:g} is below the attainable floor")


def select_parameters(method: str, t: float, spectral_bound: float, eps_A: float,
                      m_max: int | None = None) -> ExpmPlan:
    """Pick (m, s[, c]) minimizing s*m under ||dA|| <= eps_A ||A||."""
    if t <= 0:
        raise ValueError("t must be positive")
    _check_eps(eps_A)
    return _select(method, float(t), float(spectral_bound), float(eps_A), m_max)


@lru_cache(maxsize=1024)
def _select(method, t, bound, eps, m_max):
    rho_tot = t * bound
    if method == "leja":
        m_max = min(m_max or M_MAX_LEJA, M_MAX_LEJA)
        if rho_tot == 0.0:
            return ExpmPlan("leja", 1, 1, 0.0, eps, bound, t, 1, leja_coefficients(0.0, 1))
        thetas = leja_thetas(eps)
        m, s = _minimize_cost(thetas, rho_tot, m_max)
        # the table is sampled; confirm the error at the actual scaled radius
        while True:
            rho = rho_tot / s
            rel = _leja_relative_errors(LEJA_MARGIN * rho, rho, m)
            if rel[m] <= eps:
                break
            if m < m_max:
                m += 1
            else:
                s += 1
        a = LEJA_MARGIN * rho_tot / s
        return ExpmPlan("leja", m, s, a, eps, bound, t, m * s, leja_coefficients(a, m))
    if method == "taylor":
        m_max = min(m_max or M_MAX_TAYLOR, M_MAX_TAYLOR)
        if rho_tot == 0.0:
            return ExpmPlan("taylor", 1, 1, 0.0, eps, bound, t, 1)
        thetas = np.array([0.0] + [taylor_theta(k, eps) for k in range(1, m_max + 1)])
        m, s = _minimize_cost(thetas, rho_tot, m_max)
        return ExpmPlan("taylor", m, s, 0.0, eps, bound, t, m * s)
    raise ValueError(f"no parameter selection for method {method!r}")


def _minimize_cost(thetas, rho_tot, m_max):
    best = None
    for m in range(1, m_max + 1):
        if thetas[m] <= 0:
            continue
        s = max(1, math.ceil(rho_tot / thetas[m]))
        if best is None or m * s < best[0] * best[1]:
            best = (m, s)
    if best is None:
        raise ValueError("no admissible degree for this tolerance")
    return best


def optimal_tolerance(dt: float, beta: float, spectral_bound: float,
                      floor: float = TOLERANCE_FLOOR) -> float:
    """Tolerance balancing Leapfrog and exponential errors: beta dt^2 / ||A||_2."""
    if dt <= 0 or beta <= 0 or spectral_bound <= 0:
        raise ValueError("inputs must be positive")
    eps = beta * dt ** 2 / spectral_bound
    if eps < floor:
        warnings.warn(f"optimal tolerance {eps:.3g} clamped to {floor:g}", RuntimeWarning, stacklevel=2)
        return floor
    if eps >= 0.5:
        warnings.warn(f"optimal tolerance {eps:.3g} clamped to 0.5", RuntimeWarning, stacklevel=2)
        return 0.5
    return eps


# --------------------------------------------------------------------------
# polynomial actions


def taylor_action(A, b, tau: float, m: int, s: int, eps: float = 0.0,
                  ledger: CostLedger | None = None, category: str = "expm_poly"):
    """b <- T_m(tau A / s) b, s times. ``eps`` > 0 enables early termination."""
    h = tau / s
    b = np.array(b, dtype=float)
    for _ in range(s):
        F = b.copy()
        term = b
        prev = np.inf
        for k in range(1, m + 1):
            term = (h / k) * _apply(A, term, ledger, category)
            F += term
            cur = np.linalg.norm(term)
            if eps > 0 and cur + prev <= eps * np.linalg.norm(F):
                break
            prev = cur
        if not np.isfinite(F).all():
            raise ExpmOverflow("non-finite Taylor iterate; increase the scaling count s")
        b = F
    return b


def leja_action(A, b, tau: float, m: int, s: int, c: float, eps: float = 0.0,
                ledger: CostLedger | None = None, category: str = "expm_poly",
                coefficients=None):
    """b <- Re L_{m,c}(tau A / s) b, s times.

    L_{m,c} interpolates exp at Leja nodes on i[-c, c] in Newton form. With
    c = 0 all nodes collapse to the origin and the recurrence is the Taylor
    series.
    """
    h = tau / s
    b = np.array(b, dtype=float)
    if c == 0.0:
        coef = leja_coefficients(0.0, m)
        scale, nodes = h, np.zeros(m + 1)
    else:
        coef = coefficients if coefficients is not None else leja_coefficients(c, m)
        scale, nodes = h / c, leja_points()
    for _ in range(s):
        w = b.astype(complex)
        acc = coef[0] * w
        prev = np.inf
        for k in range(1, m + 1):
            w = scale * _apply(A, w, ledger, category) - (1j * nodes[k - 1]) * w
            inc = coef[k] * w
            acc += inc
            cur = np.linalg.norm(inc)
            if eps > 0 and cur + prev <= eps * np.linalg.norm(acc):
                break
            prev = cur
        if not np.isfinite(acc).all():
            raise ExpmOverflow("non-finite Leja iterate; increase the scaling count s")
        b = acc.real.copy()
    return b


def expm_action(A, b, t: float, plan: ExpmPlan, ledger: CostLedger | None = None,
                category: str = "expm_poly") -> np.ndarray:
    """Approximate exp(tA) b following ``plan``."""
    b = np.asarray(b, dtype=float)
    if t == 0.0:
        return b.copy()
    if plan.method == "taylor":
        return taylor_action(A, b, t, plan.m, plan.s, plan.eps_A, ledger, category)
    if plan.method == "leja":
        coef = plan.coefficients if plan.c == LEJA_MARGIN * plan.spectral_bound * t / plan.s else None
        return leja_action(A, b, t, plan.m, plan.s, plan.c, plan.eps_A, ledger, category, coef)
    if plan.method == "krylov_ref":
        return krylov_reference(A, b, t, plan.m, ledger)[0]
    raise ValueError(f"unknown method {plan.method!r}")


class ExpmPropagator:
    """exp(tA) b with plans cached per t, for repeated calls on one operator."""

    def __init__(self, A, method: str = "leja", eps_A: float = 1e-8,
                 spectral_bound: float | None = None, ledger: CostLedger | None = None):
        self.A = A
        self.method = method
        self.eps_A = eps_A
        if spectral_bound is None:
            spectral_bound = estimate_norm(A, ledger).value
        self.spectral_bound = spectral_bound
        self._plans = {}

    def plan(self, t: float) -> ExpmPlan:
        key = float(t)
        if key not in self._plans:
            self._plans[key] = select_parameters(self.method, key, self.spectral_bound, self.eps_A)
        return self._plans[key]

    def __call__(self, b, t: float, ledger: CostLedger | None = None):
        if t == 0.0:
            return np.array(b, dtype=float)
        return expm_action(self.A, b, t, self.plan(t), ledger)


# --------------------------------------------------------------------------
# Krylov reference


def krylov_reference(A, b, t: float, l: int, ledger: CostLedger | None = None,
                     breakdown_tol: float = 1e-12):
    """Arnoldi approximation ||b|| V_l exp(t H_l) e_1 on K^l(A, b).

    Returns (w, happy_breakdown). On breakdown the subspace is invariant and
    the result is exact up to rounding.
    """
    if l < 1 or l > 200:
        raise ValueError("subspace dimension must be in [1, 200]")
    b = np.asarray(b, dtype=float)
    beta = np.linalg.norm(b)
    if beta == 0.0:
        return np.zeros_like(b), True
    n = b.size
    V = np.zeros((n, l + 1))
    H = np.zeros((l + 1, l))
    V[:, 0] = b / beta
    k_used = l
    breakdown = False
    for j in range(l):
        w = _apply(A, V[:, j], ledger, "krylov")
        for i in range(j + 1):
            H[i, j] = V[:, i] @ w
            w = w - H[i, j] * V[:, i]
        H[j + 1, j] = np.linalg.norm(w)
        if H[j + 1, j] <= breakdown_tol * max(1.0, abs(H[: j + 1, j]).max()):
            k_used = j + 1
            breakdown = True
            break
        V[:, j + 1] = w / H[j + 1, j]
    Hk = H[:k_used, :k_used]
    y = scipy.linalg.expm(t * Hk)[:, 0]
    return beta * (V[:, :k_used] @ y), breakdown
