"""
Rate equations for a driven three-level system.

Builds the transition-rate matrix (with its decaying memory part), checks the
averaged rates against their closed form, then integrates the populations with
the order-1 micro-macro scheme and with a fine direct reference. The user-facing
eps enters the fast time as ``t / eps**2``.

Run with ``python3 demos/05_bloch_rates.py``.
"""
import warnings

import numpy as np

from sharpflat import iterate
from sharpflat.harness import compute_error, get_problem
from sharpflat.integrators import solve_direct, solve_micro_macro
from sharpflat.models import bloch_psi, bloch_psi_average

problem = get_problem("bloch-1F")
cfg = problem.config
print(f"levels {cfg.energies}, drive frequency {cfg.omega}, initial populations {cfg.rho_init}")
print("averaged rates <Psi>:\n", np.round(bloch_psi(cfg).average().real, 6))
print("closed form:\n", np.round(bloch_psi_average(cfg), 6))

dec = iterate(problem.field, 1)
print(f"\norder-1 threshold (fast-time parameter): {dec.eps_n:.3e}")
print("  eps     L     micro-macro error   population drift")
for eps in (0.3, 0.05, 0.01):
    fast = problem.fast_eps(eps)
    ref = solve_direct(problem.field, problem.u0, problem.T, 2_000_000, fast, "EEint", record_stride=5000)
    for L in (50, 100, 200, 400):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            traj = solve_micro_macro(dec, problem.field, problem.u0, problem.T, L, fast, "RK2int")
        drift = np.abs(traj.u.sum(axis=1) - 1).max()
        print(f"{eps:5.2f}  {L:4d}   {compute_error(traj, ref):.3e}          {drift:.1e}")
print(f"\nfinal populations at eps=0.01: {np.round(traj.u[-1].real, 6)}")
