"""
Order reduction of a standard scheme versus the micro-macro reformulation.

Applies RK2 directly to the stiff scalar problem and to the order-2 micro-macro
system on the same grids. Once dt is much larger than eps the direct scheme
samples the oscillation at a few phases and loses accuracy, while the micro-macro
error stays at the level set by dt alone.

Run with ``python3 demos/04_order_reduction.py``.
"""
import warnings

import numpy as np

from sharpflat.harness import compute_error, get_decomposition, get_problem
from sharpflat.integrators import solve_direct, solve_micro_macro

problem = get_problem("toy-3F")
dec = get_decomposition("toy-3F", 2)
print("   dt        eps      direct RK2   micro-macro RK2")
for L in (200, 1000, 5000):
    for eps in np.geomspace(1e-4, 1e-1, 4):
        exact = lambda t, e=eps: problem.exact(e, t)
        direct = compute_error(solve_direct(problem.field, problem.u0, problem.T, L, eps, "RK2"), exact)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            traj = solve_micro_macro(dec, problem.field, problem.u0, problem.T, L, eps, "RK2")
        print(f"{problem.T / L:.1e}  {eps:.1e}   {direct:.3e}    {compute_error(traj, exact):.3e}")
