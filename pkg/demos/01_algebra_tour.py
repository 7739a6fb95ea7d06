"""
Tour of the exp-trig polynomial algebra.

Builds a few scalar and matrix polynomials over three incommensurate
frequencies, multiplies them, takes zero-mean primitives and compares the
weighted norms with grid samples.

Run with ``python3 demos/01_algebra_tour.py``.
"""
import math

import numpy as np

from sharpflat import ExpTrigPoly, FrequencyVector

freq = FrequencyVector.from_omega([1.0, math.pi, math.sqrt(5) * math.pi])
print(f"frequencies {freq.omega}")
print(f"certified small-divisor constants: c_D={freq.c_D:.5f}, nu={freq.nu}")

# %% a quasi-periodic part plus a decaying part
b = ExpTrigPoly.cos(freq, 0) + ExpTrigPoly.sin(freq, 2, 0.5)
flat = ExpTrigPoly.exp(freq, -1.0 + 2.0j, 0.3)
p = b + flat
print(f"\np = {p!r}")
print(f"sharp part {p.sharp!r}, flat part {p.flat!r}, decay rate {p.decay_rate}")

# %% products are exact; compare against pointwise multiplication
tau = np.linspace(0, 20, 2001)
prod = p @ b
err = np.abs(prod.evaluate(tau) - p.evaluate(tau) * b.evaluate(tau)).max()
print(f"\np*b has {len(prod)} terms; pointwise mismatch {err:.2e}")
print(f"average of p*b: {prod.average()[0, 0].real:.6f} (1/2 from cos^2 plus 1/8 from the sine term)")

# %% zero-mean primitive and derivative
zm = prod - prod.mean_part()
prim = zm.zero_mean_primitive()
print(f"\nprimitive has mean {abs(prim.average()[0, 0]):.1e};"
      f" derivative recovers the input to {prim.derivative().max_coeff_diff(zm):.1e}")

# %% norms: the weighted norm dominates the sup over any grid
for kappa in (0.0, 0.5, 1.0):
    print(f"N_{kappa}(p) = {p.norm_kappa(kappa):.4f}")
print(f"grid sup |p| = {p.sup_norm_grid(tau):.4f}, coefficient sum = {p.sup_bound():.4f}")

# %% matrix-valued polynomials and JSON
M = ExpTrigPoly.from_entries(freq, 2, {(0, 1): b, (1, 0): flat})
print(f"\n2x2 polynomial at tau=0.3:\n{np.round(M.evaluate(0.3), 4)}")
assert np.array_equal(ExpTrigPoly.from_json(M.to_json()).coef, M.coef)
print("JSON round trip is bit-exact")
