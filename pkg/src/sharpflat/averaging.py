"""
Standard-averaging fixed point for ``du/dt = a(t/eps) u``.

Every object of the iteration is stored as a polynomial in ``eps`` whose
coefficients are :class:`~sharpflat.algebra.ExpTrigPoly` instances, so a single
:func:`iterate` call serves every ``eps`` of a sweep.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .algebra import ExpTrigPoly, FrequencyVector, opnorm
from .errors import ClosureError

SCHEMA_VERSION = 1
CLOSURE_TOL = 1e-12


class EpsSeries:
    """
    Polynomial ``sum_k eps**k * coeffs[k]`` with :class:`ExpTrigPoly` coefficients.

    Trailing zero coefficients are trimmed, so ``degree`` is exact.
    """

    def __init__(self, coeffs):
        coeffs = list(coeffs)
        if not coeffs:
            raise ValueError("an EpsSeries needs at least one coefficient")
        while len(coeffs) > 1 and coeffs[-1].is_zero():
            coeffs.pop()
        self.coeffs = tuple(coeffs)

    @classmethod
    def constant(cls, poly):
        return cls([poly])

    @property
    def freq(self):
        return self.coeffs[0].freq

    @property
    def dim(self):
        return self.coeffs[0].dim

    @property
    def degree(self):
        return len(self.coeffs) - 1

    def __getitem__(self, k):
        if k < len(self.coeffs):
            return self.coeffs[k]
        return ExpTrigPoly.zero(self.freq, self.dim)

    def __len__(self):
        return len(self.coeffs)

    def _zero(self):
        return ExpTrigPoly.zero(self.freq, self.dim)

    def __add__(self, other):
        if isinstance(other, ExpTrigPoly):
            other = EpsSeries([other])
        n = max(len(self), len(other))
        return EpsSeries([self[k] + other[k] for k in range(n)])

    def __neg__(self):
        return EpsSeries([-c for c in self.coeffs])

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, scalar):
        return EpsSeries([c * scalar for c in self.coeffs])

    __rmul__ = __mul__

    def __matmul__(self, other):
        if isinstance(other, ExpTrigPoly):
            return EpsSeries([c @ other for c in self.coeffs])
        out = []
        for k in range(len(self) + len(other) - 1):
            parts = [self[i] @ other[k - i]
                     for i in range(max(0, k - len(other) + 1), min(k, len(self) - 1) + 1)]
            out.append(_sum_polys(parts, self._zero()))
        return EpsSeries(out)

    def __rmatmul__(self, other):
        if isinstance(other, ExpTrigPoly):
            return EpsSeries([other @ c for c in self.coeffs])
        return NotImplemented

    def shift(self, k=1):
        """Multiply by ``eps**k``."""
        return EpsSeries([self._zero()] * k + list(self.coeffs))

    def average(self):
        """Average as a :class:`MatrixSeries`."""
        return MatrixSeries([c.average() for c in self.coeffs])

    def zero_mean_primitive(self):
        return EpsSeries([c.zero_mean_primitive() for c in self.coeffs])

    def derivative(self, order=1):
        return EpsSeries([c.derivative(order) for c in self.coeffs])

    def at(self, eps):
        """Collapse to a single :class:`ExpTrigPoly` at a numerical ``eps``."""
        out = self.coeffs[0]
        for k in range(1, len(self)):
            if not self.coeffs[k].is_zero():
                out = out + self.coeffs[k] * (eps ** k)
        return out

    def max_coeff_diff(self, other):
        n = max(len(self), len(other))
        return max(self[k].max_coeff_diff(other[k]) for k in range(n))

    def to_dict(self):
        return [c.to_dict() for c in self.coeffs]

    @classmethod
    def from_dict(cls, doc):
        return cls([ExpTrigPoly.from_dict(d) for d in doc])

    def __repr__(self):
        return f"EpsSeries(degree={self.degree}, terms={[len(c) for c in self.coeffs]})"


class MatrixSeries:
    """Polynomial in ``eps`` with constant ``d x d`` matrix coefficients."""

    def __init__(self, coeffs):
        coeffs = [np.asarray(c, dtype=complex) for c in coeffs]
        while len(coeffs) > 1 and not np.any(coeffs[-1]):
            coeffs.pop()
        self.coeffs = tuple(coeffs)

    def __getitem__(self, k):
        if k < len(self.coeffs):
            return self.coeffs[k]
        return np.zeros_like(self.coeffs[0])

    def __len__(self):
        return len(self.coeffs)

    @property
    def degree(self):
        return len(self.coeffs) - 1

    def at(self, eps):
        return sum(c * eps ** k for k, c in enumerate(self.coeffs))

    def to_list(self):
        return [[[float(x.real), float(x.imag)] for x in c.ravel()] for c in self.coeffs]

    @classmethod
    def from_list(cls, doc, dim):
        return cls([np.array([complex(*x) for x in c]).reshape(dim, dim) for c in doc])


def _sum_polys(parts, zero):
    if not parts:
        return zero
    out = parts[0]
    for p in parts[1:]:
        out = out + p
    return out


def _as_series(phi):
    return phi if isinstance(phi, EpsSeries) else EpsSeries([phi])


@dataclass
class SharpFlatField:
    """
    Forcing ``tau -> a_tau`` with the constants used by the error bounds.

    Parameters
    ----------
    a : ExpTrigPoly
        The field.
    mu : float
        Analyticity width of the sharp part used in the norm.
    M : float, optional
        Bound with ``norm_kappa(a, mu) <= M``; defaults to equality.
    q : int
        Smoothness budget for derivative bounds.
    C_a_q : float, optional
        Constant with ``sup_{p<=q} |d^p a| <= C_a_q * M``; computed from coefficient sums by default.
    """

    a: ExpTrigPoly
    mu: float = 1.0
    M: float = None
    q: int = 3
    C_a_q: float = None

    def __post_init__(self):
        if self.mu <= 0:
            raise ValueError("mu must be positive")
        norm = self.a.norm_kappa(self.mu)
        if self.M is None:
            self.M = norm
        elif norm > self.M * (1 + 1e-12):
            raise ValueError(f"M={self.M} is below norm_kappa(a, mu)={norm}")
        if self.C_a_q is None:
            sups = [self.a.derivative(p).sup_bound() for p in range(self.q + 1)]
            self.C_a_q = max(sups) / self.M if self.M > 0 else 0.0

    @property
    def freq(self) -> FrequencyVector:
        return self.a.freq

    @property
    def dim(self) -> int:
        return self.a.dim

    @property
    def rate(self) -> float:
        """Slowest flat decay rate ``g`` of the field."""
        return self.a.decay_rate


def lambda_op(phi, a, tol=CLOSURE_TOL):
    """
    ``Lambda{phi} = a phi - phi <a phi>`` for a ``phi`` whose average is the identity.

    ``phi`` may be an :class:`ExpTrigPoly` or an :class:`EpsSeries`; the result has
    the same type. ``a`` may be a field or its polynomial.
    """
    if isinstance(a, SharpFlatField):
        a = a.a
    series = _as_series(phi)
    avg = series.average()
    eye = np.eye(series.dim)
    residue = max([opnorm(avg[0] - eye)] + [opnorm(avg[k]) for k in range(1, len(avg))])
    if residue > tol:
        raise ClosureError(f"average(phi) differs from the identity by {residue:.3e}")
    a_phi = a @ series
    mean = a_phi.average()
    correction = series @ mean
    out = a_phi - correction
    if isinstance(phi, ExpTrigPoly):
        if out.degree > 0:
            raise AssertionError("unexpected eps dependence")
        return out[0]
    return out


def c_I(kappa, freq: FrequencyVector):
    """Small-divisor constant of the zero-mean antiderivative on the strip loss ``kappa``."""
    if freq.nu == 0:
        return max(1.0, 1.0 / freq.c_D)
    return max(1.0, (freq.nu / (kappa * math.e)) ** freq.nu / freq.c_D)


def bound_constants(field: SharpFlatField, n: int, c: float = 0.5):
    """The constants ``N_c``, ``L_c``, ``c_I(mu_n)`` and the width ladder ``mu_k``."""
    if not 0 < c < 1:
        raise ValueError("c must lie in (0, 1)")
    if n < 0:
        raise ValueError("order must be nonnegative")
    mu_n = field.mu / (n + 1)
    return {
        "c": c,
        "N_c": (2 + c) * (1 + c),
        "L_c": 3 + 2 * c,
        "c_I": c_I(mu_n, field.freq),
        "mu_ladder": [(1 - k / (n + 1)) * field.mu for k in range(n + 1)],
        "M": field.M,
    }


def epsilon_threshold(field: SharpFlatField, n: int, c: float = 0.5) -> float:
    """Largest ``eps`` for which the order-``n`` bounds are certified."""
    k = bound_constants(field, n, c)
    if field.M == 0:
        return math.inf
    return c / (k["c_I"] * k["N_c"] * field.M)


@dataclass
class MicroMacroDecomposition:
    """
    Result of :func:`iterate`.

    ``phis[k]`` is the eps-series of ``Phi^(k)`` for ``k = 0..n+1``; ``A`` and
    ``delta`` are the averaged matrix and the defect of order ``n``.
    """

    n: int
    phis: list
    lambdas: list
    A: MatrixSeries
    delta: EpsSeries
    eps_n: float
    constants: dict
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def phi(self) -> EpsSeries:
        return self.phis[self.n]

    @property
    def dim(self):
        return self.phi.dim

    @property
    def freq(self):
        return self.phi.freq

    def at(self, eps):
        """``(Phi^(n), A^(n), delta^(n))`` at a numerical ``eps`` (cached)."""
        key = float(eps)
        if key not in self._cache:
            self._cache[key] = (self.phi.at(eps), self.A.at(eps), self.delta.at(eps))
        return self._cache[key]

    def to_dict(self):
        return {
            "schema": "sharpflat.decomposition",
            "version": SCHEMA_VERSION,
            "n": self.n,
            "dim": self.dim,
            "eps_n": self.eps_n,
            "constants": self.constants,
            "phis": [p.to_dict() for p in self.phis],
            "lambdas": [p.to_dict() for p in self.lambdas],
            "A": self.A.to_list(),
            "delta": self.delta.to_dict(),
        }

    @classmethod
    def from_dict(cls, doc):
        if doc.get("schema") != "sharpflat.decomposition":
            raise ValueError("not a decomposition document")
        if doc.get("version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema version {doc.get('version')}")
        return cls(
            n=doc["n"],
            phis=[EpsSeries.from_dict(p) for p in doc["phis"]],
            lambdas=[EpsSeries.from_dict(p) for p in doc["lambdas"]],
            A=MatrixSeries.from_list(doc["A"], doc["dim"]),
            delta=EpsSeries.from_dict(doc["delta"]),
            eps_n=doc["eps_n"],
            constants=doc["constants"],
        )

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def iterate(field: SharpFlatField, n: int, c: float = 0.5) -> MicroMacroDecomposition:
    """
    Run the fixed point ``Phi^(k+1) = id + eps * zmp(Lambda{Phi^(k)})`` up to ``k = n + 1``.

    Returns the order-``n`` decomposition with ``A^(n) = <a Phi^(n)>`` and
    ``delta^(n) = Lambda{Phi^(n-1)} - Lambda{Phi^(n)}``.
    """
    constants = bound_constants(field, n, c)
    eps_n = epsilon_threshold(field, n, c)
    identity = ExpTrigPoly.identity(field.freq, field.dim)
    phis = [EpsSeries([identity])]
    lambdas = []
    for k in range(n + 1):
        lam = lambda_op(phis[k], field.a)
        lambdas.append(lam)
        phis.append(EpsSeries([identity]) + lam.zero_mean_primitive().shift(1))
    A = (field.a @ phis[n]).average()
    previous = lambdas[n - 1] if n >= 1 else EpsSeries([ExpTrigPoly.zero(field.freq, field.dim)])
    delta = previous - lambdas[n]
    return MicroMacroDecomposition(n, phis, lambdas, A, delta, eps_n, constants)


@dataclass
class BoundCheck:
    name: str
    measured: float
    bound: float
    rigorous_upper: float
    passed: bool


@dataclass
class BoundReport:
    eps: float
    n: int
    eps_n: float
    checks: list
    derivative_constant: float
    measured_c_q: float

    @property
    def passed(self):
        return all(ch.passed for ch in self.checks)

    def summary(self):
        lines = [f"eps={self.eps:.6g} n={self.n} eps_n={self.eps_n:.6g}"]
        for ch in self.checks:
            lines.append(f"  {'PASS' if ch.passed else 'FAIL'} {ch.name}: grid={ch.measured:.4e} "
                         f"upper={ch.rigorous_upper:.4e} bound={ch.bound:.4e}")
        return "\n".join(lines)


def sample_grid(freq: FrequencyVector, points=4096, flat_window=20.0):
    """Sample times covering one quasi-period estimate plus the flat-decay window."""
    period = 2 * math.pi / min(abs(w) for w in freq.omega)
    return np.unique(np.concatenate([np.linspace(0.0, period, points),
                                     np.linspace(0.0, flat_window, points)]))


def verify_bounds(dec: MicroMacroDecomposition, field: SharpFlatField, eps: float,
                  q: int = None, points=4096) -> BoundReport:
    """
    Check the order-``n`` estimates at ``eps``.

    Each sup-norm is measured on a sample grid and bounded from above by the sum of
    coefficient norms; a check passes when either value is within the bound.
    """
    if eps > dec.eps_n * (1 + 1e-12):
        raise ValueError(f"eps={eps} exceeds the certified threshold eps_n={dec.eps_n}")
    q = field.q if q is None else q
    c, M, n = dec.constants["c"], field.M, dec.n
    ratio = eps / dec.eps_n
    taus = sample_grid(field.freq, points)
    phi, A, delta = dec.at(eps)
    eye = ExpTrigPoly.identity(field.freq, field.dim)

    def check(name, poly, bound):
        upper = poly.sup_bound()
        grid = poly.sup_norm_grid(taus)
        return BoundCheck(name, grid, bound, upper, bool(min(grid, upper) <= bound * (1 + 1e-12)))

    checks = [check("near_identity", phi - eye, c * ratio)]
    a_norm = float(opnorm(A))
    checks.append(BoundCheck("averaged_matrix", a_norm, (1 + c) * M, a_norm,
                             a_norm <= (1 + c) * M * (1 + 1e-12)))
    checks.append(check("defect", delta, M * ratio ** n))
    prim = delta.zero_mean_primitive() if not delta.is_zero() else delta
    integral = (prim - ExpTrigPoly.constant(field.freq, prim.evaluate(0.0))) * eps
    upper = 2 * eps * prim.sup_bound()
    grid = integral.sup_norm_grid(taus)
    bound = ratio ** (n + 1)
    checks.append(BoundCheck("defect_integral", grid, bound, upper,
                             bool(min(grid, upper) <= bound * (1 + 1e-12))))

    # measured derivative constant c^(q) over the ladder Phi^(0..n)
    c_q = max(dec.phis[k].at(eps).derivative(p).sup_bound()
              for k in range(n + 1) for p in range(q + 1))
    L_q = 2 ** q * field.C_a_q + 1 + c + c_q
    C_delta = field.C_a_q * (dec.eps_n * L_q * M) ** n if M > 0 else 0.0
    deriv_grid = max(delta.derivative(p).sup_norm_grid(taus) for p in range(q + 1))
    deriv_upper = max(delta.derivative(p).sup_bound() for p in range(q + 1))
    bound = C_delta * M * ratio ** n
    checks.append(BoundCheck("defect_derivatives", deriv_grid, bound, deriv_upper,
                             bool(min(deriv_grid, deriv_upper) <= bound * (1 + 1e-12))))
    return BoundReport(eps, n, dec.eps_n, checks, C_delta, c_q)


def corollary_w_bound(dec: MicroMacroDecomposition, field: SharpFlatField, eps, t, u0_norm):
    """Explicit bound on ``|w^(n)(t)|`` valid for ``eps <= eps_n``."""
    c, M = dec.constants["c"], field.M
    a_sup = field.a.sup_bound()
    t = np.asarray(t, dtype=float)
    return ((eps / dec.eps_n) ** (dec.n + 1) * np.exp(t * a_sup)
            * (2 * np.exp((1 + c) * t * M) - 1) * u0_norm / (1 - c))


def warn_if_beyond(dec: MicroMacroDecomposition, eps):
    if eps > dec.eps_n:
        warnings.warn(f"eps={eps:.3g} exceeds eps_n={dec.eps_n:.3g}; the error bounds do not apply",
                      RuntimeWarning, stacklevel=3)
