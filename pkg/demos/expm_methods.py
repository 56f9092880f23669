"""
Exponential propagators on the cavity operator
==============================================

exp(tA) b over the whole interval for the 41 x 41 x 2 cavity, by Leja
interpolation, truncated Taylor and restarted Arnoldi. Counts are SMVPs.
"""

import numpy as np

from paraexp_em.expm import estimate_norm, expm_action, krylov_reference, select_parameters
from paraexp_em.ledger import CostLedger
from paraexp_em.problems import wave2d

sys = wave2d()
A = sys.A
led = CostLedger()
bound = estimate_norm(A, led).value
print(f"||A||_2 ~ {bound:.4e} 1/s after {led['expm_norm']} SMVPs of power iteration")

t = 2e-7
b = np.random.default_rng(0).standard_normal(sys.size)
ref = expm_action(A, b, t, select_parameters("leja", t, bound, 1e-12))

# %% polynomial methods: planned s*m and what early termination leaves of it
for method in ("leja", "taylor"):
    for eps_A in (1e-2, 1e-6, 1e-10):
        plan = select_parameters(method, t, bound, eps_A)
        led = CostLedger()
        w = expm_action(A, b, t, plan, led)
        err = np.linalg.norm(w - ref) / np.linalg.norm(ref)
        print(f"{method:6s} eps_A {eps_A:.0e}: m {plan.m:3d} s {plan.s:3d} planned {plan.predicted_cost:5d} "
              f"used {led['expm_poly']:5d}  error {err:.2e}  |w|/|b| - 1 = "
              f"{np.linalg.norm(w) / np.linalg.norm(b) - 1:+.1e}")

# %% Arnoldi restarted on equal substeps
for l, nsub in ((20, 32), (40, 16), (80, 8)):
    led = CostLedger()
    x = b
    for _ in range(nsub):
        x = krylov_reference(A, x, t / nsub, l, led)[0]
    err = np.linalg.norm(x - ref) / np.linalg.norm(ref)
    print(f"arnoldi l {l:3d} x {nsub:3d}: {led['krylov']:5d} SMVPs  error {err:.2e}")
