"""
Where ParaExp pays off: step count and mesh grading
===================================================

Leapfrog cost grows with the number of steps; the exponential track does
not. Shrinking one cell row and column forces tiny Leapfrog steps while
||A|| and hence the Leja cost grow far more slowly.
"""

import numpy as np

from paraexp_em.diagnostics import nonuniform_cost_sweep, uniform_cost_sweep
from paraexp_em.paraexp import make_partition, run
from paraexp_em.problems import WAVE2D, wave2d

interval = WAVE2D["interval"]

# %% ParaExp on six intervals with outputs only at the interval boundaries
sys = wave2d()
for n_t in (200, 500, 800):
    part = make_partition(interval, 6, interval[1] / n_t)
    res = run(sys, None, part, e_steps=part.starts, h_steps=[])
    print(f"n_t {n_t:4d}: Leapfrog {2 * n_t:5d} SMVPs, n_Leja {res.ledger.n_leja:4d}, "
          f"effective ParaExp cost {res.effective_cost:6.0f}")

# %% one exponential over the whole interval, for several meshes
print("\n  nx    nt  leapfrog  leja")
for nx, nt, c_lf, c_leja in uniform_cost_sweep([21, 41, 61], [200, 800], interval):
    print(f"{nx:4d} {nt:5d} {c_lf:9d} {c_leja:5d}")

# %% graded mesh: R = C_Leja / C_LF against the shrink factor k
print("\n   k    nt   C_LF  C_Leja      R")
for k, nt, c_lf, c_leja, R in nonuniform_cost_sweep([1, 2, 5, 10, 20]):
    print(f"{k:4.0f} {nt:5d} {c_lf:6d} {c_leja:7d} {R:6.3f}")
