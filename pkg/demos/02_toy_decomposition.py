"""
Micro-macro decomposition of the scalar test field.

The field is ``a = -1 + mean of cos(omega_p tau) + gamma exp(-tau)``. Its exact
solution is known, so the micro part ``w = u - Phi(t/eps) v`` can be computed
directly and its size compared with ``eps**(n+1)``.

Run with ``python3 demos/02_toy_decomposition.py``.
"""
import warnings

import numpy as np

from sharpflat import iterate, verify_bounds
from sharpflat.harness import get_problem
from sharpflat.integrators import initial_state

problem = get_problem("toy-3F-flat")
field = problem.field
print(f"field: {field.a!r}, M = {field.M:.4f}")

for n in (1, 2):
    dec = iterate(field, n)
    print(f"\n--- order {n}: eps_n = {dec.eps_n:.3e}")
    print(f"Phi^({n}) terms per power of eps: {[len(c) for c in dec.phi.coeffs]}")
    print(f"averaged matrix coefficients: {[complex(c[0, 0]) for c in dec.A.coeffs]}")
    report = verify_bounds(dec, field, dec.eps_n / 2)
    print(report.summary())

    # the macro variable solves v' = -v exactly, so w follows from the exact solution
    print("eps        max|w|      max|w| / eps^(n+1)")
    for eps in np.geomspace(1e-3, 1e-1, 5):
        t = np.linspace(0, problem.T, 20001)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            v0 = initial_state(dec, problem.u0, eps).v[0]
        w = problem.exact(eps, t)[:, 0] - dec.at(eps)[0].evaluate(t / eps)[:, 0, 0] * np.exp(-t) * v0
        size = np.abs(w).max()
        print(f"{eps:.2e}   {size:.3e}   {size / eps ** (n + 1):.3f}")
