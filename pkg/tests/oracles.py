"""
Closed forms used as independent references by the tests.

Polynomial oracles are assembled from ring operations on elementary terms
(sin, cos, exp), never through the averaging iteration. Pointwise oracles use
plain numpy/scipy.
"""
from __future__ import annotations

import math
from itertools import permutations

import numpy as np
from scipy.integrate import quad

from sharpflat.algebra import ExpTrigPoly


# ---------------------------------------------------------------- scalar toy field

def toy_b(freq, omega):
    out = ExpTrigPoly.zero(freq)
    for p in range(len(omega)):
        out = out + ExpTrigPoly.cos(freq, p, 1.0 / len(omega))
    return out


def toy_B(freq, omega):
    """Zero-mean primitive of ``b``."""
    out = ExpTrigPoly.zero(freq)
    for p, w in enumerate(omega):
        out = out + ExpTrigPoly.sin(freq, p, 1.0 / (len(omega) * w))
    return out


def toy_flat(freq, gamma):
    return ExpTrigPoly.exp(freq, -1.0, gamma)


def toy_C1(freq, omega, gamma):
    return toy_B(freq, omega) - toy_flat(freq, gamma)


def toy_C2_sharp(freq, omega):
    """Sharp part of the second corrector, written with the two-frequency double sum."""
    r = len(omega)
    out = ExpTrigPoly.zero(freq)
    for p, w in enumerate(omega):
        s = ExpTrigPoly.sin(freq, p)
        out = out + (s @ s - ExpTrigPoly.constant(freq, [[0.5]])) * (1.0 / (2 * w * w))
    for p1, p2 in permutations(range(r), 2):
        w1, w2 = omega[p1], omega[p2]
        ss = ExpTrigPoly.sin(freq, p1) @ ExpTrigPoly.sin(freq, p2)
        cc = ExpTrigPoly.cos(freq, p1) @ ExpTrigPoly.cos(freq, p2)
        out = out + (ss * w1 + cc * w2) * (1.0 / (w2 * (w1 * w1 - w2 * w2)))
    return out * (1.0 / r ** 2)


def toy_C2_flat(freq, omega, gamma):
    af = toy_flat(freq, gamma)
    return af @ af * 0.5 - af @ toy_B(freq, omega)


def toy_C2(freq, omega, gamma):
    return toy_C2_sharp(freq, omega) + toy_C2_flat(freq, omega, gamma)


def toy_delta1(freq, omega, gamma):
    """Coefficient of ``eps`` in the first-order defect."""
    return (toy_b(freq, omega) + toy_flat(freq, gamma)) @ toy_C1(freq, omega, gamma) * -1.0


def toy_delta2(freq, omega, gamma):
    """Coefficient of ``eps**2`` in the second-order defect."""
    return (toy_b(freq, omega) + toy_flat(freq, gamma)) @ toy_C2(freq, omega, gamma) * -1.0


def toy_B_values(omega, tau):
    tau = np.asarray(tau, dtype=float)
    return sum(np.sin(w * tau) / w for w in omega) / len(omega)


def toy_C2_sharp_values(omega, tau):
    """``B(tau)**2 / 2`` minus its mean."""
    B = toy_B_values(omega, tau)
    mean = sum(1.0 / (2 * w * w) for w in omega) / len(omega) ** 2
    return 0.5 * (B * B - mean)


def toy_solution(omega, gamma, u0, eps, t):
    t = np.asarray(t, dtype=float)
    tau = t / eps
    return u0 * np.exp(-t + eps * (toy_B_values(omega, tau) + gamma - gamma * np.exp(-tau)))


# ---------------------------------------------------------------- rate model

def rs_coefficients(omega, Omega):
    den = omega ** 2 + Omega ** 2
    return (omega / den).real, -(Omega / den).real


def bloch_omega_matrix(energies, gamma):
    E = np.asarray(energies, dtype=float)
    return -1j * (E[:, None] - E[None, :]) - np.asarray(gamma, dtype=float)


def psi_average(energies, gamma, dipole, omega, E0):
    Om = bloch_omega_matrix(energies, gamma)
    p2 = np.abs(np.asarray(dipole, dtype=complex)) ** 2
    n, r = len(energies), len(omega)
    out = np.zeros((n, n))
    for l in range(n):
        for j in range(n):
            if l != j:
                out[l, j] = E0 ** 2 / r ** 2 * p2[l, j] * sum(rs_coefficients(w, Om[l, j])[1] for w in omega)
    return out


def upsilon_values(energies, gamma, dipole, omega, E0, tau):
    """``(E0^2 |p|^2 / w) (R sin^2 + S sin cos)`` stacked as ``(N, n, n)``."""
    Om = bloch_omega_matrix(energies, gamma)
    p2 = np.abs(np.asarray(dipole, dtype=complex)) ** 2
    R, S = rs_coefficients(omega, Om)
    s, c = np.sin(omega * tau), np.cos(omega * tau)
    out = E0 ** 2 * p2 / omega * (R * (s * s)[:, None, None] + S * (s * c)[:, None, None])
    idx = np.arange(len(energies))
    out[:, idx, idx] = 0.0
    return out


def product_average(energies, gamma, dipole, omega, E0, l, j, k, i):
    Om = bloch_omega_matrix(energies, gamma)
    p2 = np.abs(np.asarray(dipole, dtype=complex)) ** 2
    R, S = rs_coefficients(omega, Om)
    return E0 ** 4 * p2[l, j] * p2[k, i] / (4 * omega) * (R[l, j] * S[k, i] + S[l, j] * R[k, i])


def psi_quadrature(energies, gamma, dipole, omega, E0, tau, l, j):
    """Rate entry from its memory integral over ``[0, tau]``."""
    Om = bloch_omega_matrix(energies, gamma)[l, j]
    r = len(omega)

    def field(s):
        return E0 / r * sum(math.cos(w * s) for w in omega)

    def kernel(s):
        return (np.exp(Om * s) * field(tau - s)).real

    val = quad(kernel, 0.0, tau, limit=500, epsabs=1e-14, epsrel=1e-13)[0]
    return 2.0 * abs(complex(np.asarray(dipole)[l, j])) ** 2 * field(tau) * val
