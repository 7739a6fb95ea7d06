"""
Matrix-valued exponential-trigonometric polynomials.

An :class:`ExpTrigPoly` is a finite sum of terms ``C exp((i alpha.omega + lam) tau)``
with ``C`` a complex ``d x d`` matrix, ``alpha`` an integer multi-index and ``lam``
a complex decay exponent with ``Re(lam) <= 0``. Terms with ``lam == 0`` form the
quasi-periodic (sharp) part, terms with ``Re(lam) < 0`` the decaying (flat) part.
The class is closed under sums, noncommutative products, derivatives and zero-mean
antiderivatives, so every object of the averaging procedure is represented exactly
up to floating point.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ModeCapError, NonZeroMeanError, ResonanceError

DROP_RTOL = 1e-14
"""Relative operator-norm threshold below which coefficients are dropped."""

LAMBDA_MERGE_TOL = 1e-12
LAMBDA_ZERO_TOL = 1e-13
DEFAULT_MAX_MODE = 64


def opnorm(C):
    """Induced l1 operator norm (max column sum), vectorized over leading axes."""
    return np.abs(C).sum(axis=-2).max(axis=-1)


def diophantine_constant(omega, nu, max_order=DEFAULT_MAX_MODE):
    """
    Largest ``c_D`` with ``|alpha.omega| >= c_D / |alpha|**nu`` for ``0 < |alpha| <= max_order``.

    The infimum is taken over every multi-index up to ``max_order``, which is the
    only range the algebra ever produces (see the mode cap).
    """
    omega = np.asarray(omega, dtype=float)
    r = omega.size
    if r == 1:
        return abs(float(omega[0]))
    best = np.inf
    rng = np.arange(-max_order, max_order + 1)
    # enumerate the last coordinate in a loop to bound memory
    head = np.array(np.meshgrid(*([rng] * (r - 1)), indexing="ij")).reshape(r - 1, -1).T
    head_l1 = np.abs(head).sum(axis=1)
    head_dot = head @ omega[:-1]
    for k in rng:
        l1 = head_l1 + abs(k)
        mask = (l1 > 0) & (l1 <= max_order)
        if not mask.any():
            continue
        dots = np.abs(head_dot[mask] + k * omega[-1])
        best = min(best, float(np.min(dots * l1[mask].astype(float) ** nu)))
    return best


@dataclass(frozen=True)
class FrequencyVector:
    """
    Base angular frequencies with their Diophantine constants.

    Parameters
    ----------
    omega : tuple of float
        Nonzero frequencies ``omega_1..omega_r``.
    c_D, nu : float
        Constants of the small-divisor bound ``|alpha.omega| >= c_D/|alpha|**nu``.
        In the mono-frequency case ``nu = 0`` and ``c_D = |omega_1|``.
    resonance_tol : float, optional
        Threshold under which ``|alpha.omega|`` is treated as a resonance.
        Defaults to ``1e-10 * max|omega|``.
    """

    omega: tuple
    c_D: float
    nu: float
    resonance_tol: float = None

    def __post_init__(self):
        omega = tuple(float(w) for w in np.atleast_1d(self.omega))
        object.__setattr__(self, "omega", omega)
        if len(omega) < 1:
            raise ValueError("at least one frequency is required")
        if any(w == 0.0 for w in omega):
            raise ValueError("frequencies must be nonzero")
        if self.c_D <= 0:
            raise ValueError("c_D must be positive")
        if self.nu < 0:
            raise ValueError("nu must be nonnegative")
        if len(omega) == 1 and (self.nu != 0 or not math.isclose(self.c_D, abs(omega[0]))):
            raise ValueError("mono-frequency vectors use nu = 0 and c_D = |omega|")
        if self.resonance_tol is None:
            object.__setattr__(self, "resonance_tol", 1e-10 * max(abs(w) for w in omega))

    @classmethod
    def from_omega(cls, omega, nu=None, max_order=DEFAULT_MAX_MODE, resonance_tol=None):
        """Build a frequency vector, certifying ``c_D`` by enumeration up to ``max_order``."""
        omega = tuple(float(w) for w in np.atleast_1d(omega))
        r = len(omega)
        if r == 1:
            return cls(omega, abs(omega[0]), 0.0, resonance_tol)
        if nu is None:
            nu = float(r - 1)
        c_D = diophantine_constant(omega, nu, max_order)
        if not c_D > 0:
            raise ResonanceError(f"frequencies {omega} are resonant up to order {max_order}")
        return cls(omega, c_D, float(nu), resonance_tol)

    @property
    def r(self):
        return len(self.omega)

    @property
    def array(self):
        return np.asarray(self.omega)

    def to_dict(self):
        return {"omega": list(self.omega), "c_D": self.c_D, "nu": self.nu,
                "resonance_tol": self.resonance_tol}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["omega"]), d["c_D"], d["nu"], d.get("resonance_tol"))


def _canonical_arrays(freq, dim, alpha, lam, coef, max_mode):
    """Merge equal keys, drop negligible terms and validate exponents."""
    r = freq.r
    alpha = np.asarray(alpha, dtype=np.int64).reshape(-1, r)
    lam = np.asarray(lam, dtype=complex).reshape(-1)
    coef = np.asarray(coef, dtype=complex).reshape(-1, dim, dim)
    if lam.size == 0:
        return alpha, lam, coef

    norms = opnorm(coef)
    keep = norms > 0
    if not keep.all():
        alpha, lam, coef = alpha[keep], lam[keep], coef[keep]
        if lam.size == 0:
            return alpha, lam, coef

    lam = lam.copy()
    mag = np.abs(lam)
    lam[mag <= LAMBDA_ZERO_TOL] = 0.0
    re = lam.real
    if np.any(re > LAMBDA_ZERO_TOL * np.maximum(1.0, mag)):
        raise ValueError("growing exponents (Re lambda > 0) are not allowed")
    pure_imag = (lam != 0) & (np.abs(re) <= LAMBDA_ZERO_TOL * np.maximum(1.0, mag))
    if pure_imag.any():
        # fold purely oscillatory exponents into the multi-index when possible
        if r != 1:
            raise ValueError("purely imaginary exponents cannot be folded into a multi-index")
        w = freq.omega[0]
        shift = np.round(lam.imag[pure_imag] / w)
        if np.any(np.abs(shift * w - lam.imag[pure_imag]) > LAMBDA_MERGE_TOL * np.maximum(1.0, mag[pure_imag])):
            raise ValueError("purely imaginary exponent is not a multiple of the base frequency")
        alpha = alpha.copy()
        alpha[pure_imag, 0] += shift.astype(np.int64)
        lam[pure_imag] = 0.0

    keys = [lam.imag, lam.real] + [alpha[:, j] for j in range(r - 1, -1, -1)]
    order = np.lexsort(keys)
    alpha, lam, coef = alpha[order], lam[order], coef[order]
    if lam.size > 1:
        same_alpha = np.all(alpha[1:] == alpha[:-1], axis=1)
        close_lam = np.abs(lam[1:] - lam[:-1]) <= LAMBDA_MERGE_TOL * np.maximum(1.0, np.abs(lam[1:]))
        new = np.concatenate(([True], ~(same_alpha & close_lam)))
        starts = np.flatnonzero(new)
        coef = np.add.reduceat(coef, starts, axis=0)
        alpha, lam = alpha[starts], lam[starts]

    norms = opnorm(coef)
    top = norms.max() if norms.size else 0.0
    keep = norms > DROP_RTOL * top
    alpha, lam, coef = alpha[keep], lam[keep], coef[keep]

    if alpha.size and max_mode is not None:
        width = np.abs(alpha).sum(axis=1).max()
        if width > max_mode:
            raise ModeCapError(f"mode radius {width} exceeds cap {max_mode}")
    sharp_osc = (lam == 0) & np.any(alpha != 0, axis=1)
    if sharp_osc.any():
        dots = np.abs(alpha[sharp_osc] @ freq.array)
        if np.any(dots <= freq.resonance_tol):
            raise ResonanceError("a sharp mode with alpha != 0 has alpha.omega ~ 0")
    return alpha, lam, coef


@dataclass(frozen=True, eq=False)
class ExpTrigPoly:
    """
    Finite sum ``sum_k C_k exp((i alpha_k.omega + lam_k) tau)`` with ``d x d`` coefficients.

    Instances are immutable and always canonical: no repeated ``(alpha, lam)``
    keys, no negligible coefficients, terms sorted by key.
    Use the classmethod constructors rather than the raw initializer.
    """

    freq: FrequencyVector
    dim: int
    alpha: np.ndarray = field(repr=False)
    lam: np.ndarray = field(repr=False)
    coef: np.ndarray = field(repr=False)
    max_mode: int = DEFAULT_MAX_MODE

    def __post_init__(self):
        for name in ("alpha", "lam", "coef"):
            getattr(self, name).setflags(write=False)

    # -- construction ---------------------------------------------------
    @classmethod
    def from_arrays(cls, freq, dim, alpha, lam, coef, max_mode=DEFAULT_MAX_MODE):
        a, l, c = _canonical_arrays(freq, dim, alpha, lam, coef, max_mode)
        return cls(freq, dim, a, l, c, max_mode)

    @classmethod
    def from_terms(cls, freq, dim, terms, max_mode=DEFAULT_MAX_MODE):
        """``terms`` is an iterable of ``(alpha, lam, coeff)`` or a mapping ``{(alpha, lam): coeff}``."""
        if hasattr(terms, "items"):
            terms = [(k[0], k[1], v) for k, v in terms.items()]
        terms = list(terms)
        r = freq.r
        if not terms:
            return cls.zero(freq, dim, max_mode)
        alpha = np.array([np.broadcast_to(np.asarray(t[0], dtype=np.int64), (r,)) for t in terms])
        lam = np.array([complex(t[1]) for t in terms])
        coef = np.array([np.broadcast_to(np.asarray(t[2], dtype=complex), (dim, dim)) for t in terms])
        return cls.from_arrays(freq, dim, alpha, lam, coef, max_mode)

    @classmethod
    def zero(cls, freq, dim=1, max_mode=DEFAULT_MAX_MODE):
        return cls(freq, dim, np.zeros((0, freq.r), np.int64), np.zeros(0, complex),
                   np.zeros((0, dim, dim), complex), max_mode)

    @classmethod
    def constant(cls, freq, matrix, max_mode=DEFAULT_MAX_MODE):
        matrix = np.atleast_2d(np.asarray(matrix, dtype=complex))
        dim = matrix.shape[0]
        return cls.from_arrays(freq, dim, np.zeros((1, freq.r), np.int64), [0.0], matrix[None], max_mode)

    @classmethod
    def identity(cls, freq, dim=1, max_mode=DEFAULT_MAX_MODE):
        return cls.constant(freq, np.eye(dim), max_mode)

    @classmethod
    def cos(cls, freq, p, amplitude=1.0, dim=1):
        """``amplitude * cos(omega_p tau)`` (``p`` is zero-based)."""
        e = np.zeros(freq.r, np.int64)
        e[p] = 1
        C = 0.5 * np.asarray(amplitude, dtype=complex) * np.eye(dim)
        return cls.from_terms(freq, dim, [(e, 0, C), (-e, 0, C)])

    @classmethod
    def sin(cls, freq, p, amplitude=1.0, dim=1):
        """``amplitude * sin(omega_p tau)`` (``p`` is zero-based)."""
        e = np.zeros(freq.r, np.int64)
        e[p] = 1
        C = np.asarray(amplitude, dtype=complex) * np.eye(dim) / 2j
        return cls.from_terms(freq, dim, [(e, 0, C), (-e, 0, -C)])

    @classmethod
    def exp(cls, freq, lam, amplitude=1.0, dim=1):
        """``amplitude * exp(lam tau)`` with ``Re(lam) < 0`` (a flat term)."""
        C = np.asarray(amplitude, dtype=complex) * np.eye(dim)
        return cls.from_terms(freq, dim, [(np.zeros(freq.r, np.int64), lam, C)])

    @classmethod
    def from_entries(cls, freq, dim, entries):
        """Assemble a matrix polynomial from scalar polynomials ``{(row, col): poly}``."""
        alphas, lams, coefs = [], [], []
        for (i, j), p in entries.items():
            if p.dim != 1:
                raise ValueError("entries must be scalar polynomials")
            C = np.zeros((len(p), dim, dim), complex)
            C[:, i, j] = p.coef[:, 0, 0]
            alphas.append(p.alpha)
            lams.append(p.lam)
            coefs.append(C)
        if not alphas:
            return cls.zero(freq, dim)
        return cls.from_arrays(freq, dim, np.concatenate(alphas), np.concatenate(lams),
                               np.concatenate(coefs))

    def entry(self, i, j):
        """Scalar polynomial of matrix entry ``(i, j)``."""
        return ExpTrigPoly.from_arrays(self.freq, 1, self.alpha, self.lam,
                                       self.coef[:, i, j].reshape(-1, 1, 1), self.max_mode)

    def _like(self, alpha, lam, coef, dim=None):
        return ExpTrigPoly.from_arrays(self.freq, self.dim if dim is None else dim,
                                       alpha, lam, coef, self.max_mode)

    # -- structure ------------------------------------------------------
    def __len__(self):
        return self.lam.size

    @property
    def terms(self):
        """Mapping ``{(alpha tuple, lam): coefficient}`` in canonical order."""
        return {(tuple(int(x) for x in a), complex(l)): c.copy()
                for a, l, c in zip(self.alpha, self.lam, self.coef)}

    @property
    def is_sharp(self):
        return self.lam == 0

    @property
    def sharp(self):
        """Quasi-periodic part (``lam == 0`` terms)."""
        m = self.is_sharp
        return ExpTrigPoly(self.freq, self.dim, self.alpha[m], self.lam[m], self.coef[m], self.max_mode)

    @property
    def flat(self):
        """Exponentially decaying part (``Re lam < 0`` terms)."""
        m = ~self.is_sharp
        return ExpTrigPoly(self.freq, self.dim, self.alpha[m], self.lam[m], self.coef[m], self.max_mode)

    @property
    def exponents(self):
        """Complex exponents ``i alpha.omega + lam`` of the terms."""
        return 1j * (self.alpha @ self.freq.array) + self.lam

    @property
    def decay_rate(self):
        """Slowest flat decay rate ``min(-Re lam)``; ``inf`` when there is no flat part."""
        flat = ~self.is_sharp
        return float(np.min(-self.lam.real[flat])) if flat.any() else math.inf

    @property
    def mode_radius(self):
        return int(np.abs(self.alpha).sum(axis=1).max()) if len(self) else 0

    def is_zero(self):
        return len(self) == 0

    def _check_compatible(self, other):
        if not isinstance(other, ExpTrigPoly):
            raise TypeError(f"expected ExpTrigPoly, got {type(other).__name__}")
        if self.freq.omega != other.freq.omega:
            raise ValueError("frequency vectors differ")
        if self.dim != other.dim:
            raise ValueError(f"dimension mismatch: {self.dim} vs {other.dim}")

    # -- arithmetic -----------------------------------------------------
    def __add__(self, other):
        if not isinstance(other, ExpTrigPoly):
            return self + ExpTrigPoly.constant(self.freq, np.asarray(other) * np.eye(self.dim))
        self._check_compatible(other)
        return self._like(np.concatenate([self.alpha, other.alpha]),
                          np.concatenate([self.lam, other.lam]),
                          np.concatenate([self.coef, other.coef]))

    __radd__ = __add__

    def __neg__(self):
        return ExpTrigPoly(self.freq, self.dim, self.alpha, self.lam, -self.coef, self.max_mode)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, scalar):
        if isinstance(scalar, ExpTrigPoly):
            if self.dim != 1 and scalar.dim != 1:
                raise TypeError("use @ for matrix products")
            return self @ scalar
        return self._like(self.alpha, self.lam, self.coef * complex(scalar))

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self * (1.0 / complex(scalar))

    def __matmul__(self, other):
        if isinstance(other, np.ndarray):
            other = ExpTrigPoly.constant(self.freq, other)
        if not isinstance(other, ExpTrigPoly):
            return NotImplemented
        self._check_compatible(other)
        if len(self) == 0 or len(other) == 0:
            return ExpTrigPoly.zero(self.freq, self.dim, self.max_mode)
        alpha = (self.alpha[:, None, :] + other.alpha[None, :, :]).reshape(-1, self.freq.r)
        lam = (self.lam[:, None] + other.lam[None, :]).reshape(-1)
        coef = np.einsum("aij,bjk->abik", self.coef, other.coef).reshape(-1, self.dim, self.dim)
        return self._like(alpha, lam, coef)

    def __rmatmul__(self, other):
        if isinstance(other, np.ndarray):
            return ExpTrigPoly.constant(self.freq, other) @ self
        return NotImplemented

    def transpose(self):
        return ExpTrigPoly(self.freq, self.dim, self.alpha, self.lam,
                           np.ascontiguousarray(self.coef.transpose(0, 2, 1)), self.max_mode)

    def map_coefficients(self, fn):
        """Apply a linear map to every coefficient matrix (``fn`` acts on a ``(K, d, d)`` stack)."""
        return self._like(self.alpha, self.lam, fn(self.coef.copy()))

    # -- averaging calculus --------------------------------------------
    def average(self):
        """Long-time average: the coefficient of the ``(alpha = 0, lam = 0)`` term."""
        m = self.is_sharp & np.all(self.alpha == 0, axis=1)
        if m.any():
            return self.coef[m][0].copy()
        return np.zeros((self.dim, self.dim), complex)

    def mean_part(self):
        """The average as a constant polynomial."""
        return ExpTrigPoly.constant(self.freq, self.average(), self.max_mode) if self._has_mean() \
            else ExpTrigPoly.zero(self.freq, self.dim, self.max_mode)

    def _has_mean(self):
        return bool(np.any(self.is_sharp & np.all(self.alpha == 0, axis=1)))

    def zero_mean_primitive(self, mean_rtol=1e-12):
        """
        The antiderivative with zero average.

        Sharp modes are divided by ``i alpha.omega``; flat terms are integrated from
        ``+inf`` (divided by ``lam + i alpha.omega``).

        Raises
        ------
        NonZeroMeanError
            If the ``(0, 0)`` coefficient is not negligible.
        ResonanceError
            If a present sharp mode is numerically resonant.
        """
        mean_mask = self.is_sharp & np.all(self.alpha == 0, axis=1)
        norms = opnorm(self.coef)
        if mean_mask.any():
            scale = norms.max()
            if opnorm(self.coef[mean_mask][0]) > mean_rtol * scale:
                raise NonZeroMeanError("input has a nonzero average")
        keep = ~mean_mask
        alpha, lam, coef = self.alpha[keep], self.lam[keep], self.coef[keep]
        z = 1j * (alpha @ self.freq.array) + lam
        sharp = lam == 0
        if np.any(np.abs(z[sharp]) <= self.freq.resonance_tol):
            raise ResonanceError("small divisor below resonance tolerance")
        return self._like(alpha, lam, coef / z[:, None, None])

    def derivative(self, order=1):
        """``order``-th derivative in ``tau`` (termwise multiplication by the exponent)."""
        if order < 0:
            raise ValueError("order must be nonnegative")
        if order == 0:
            return self
        z = self.exponents
        return self._like(self.alpha, self.lam, self.coef * (z ** order)[:, None, None])

    # -- norms ----------------------------------------------------------
    def norm_kappa(self, kappa=0.0, strict=False):
        """
        Sharp-flat norm ``sum_sharp e^{kappa|alpha|} |C| + sum_flat |C|``.

        The flat sum bounds ``sup e^{g tau} |flat(tau)|`` for the polynomial's own
        decay rate ``g`` (see :attr:`decay_rate`). With ``strict=True`` the rate is
        pinned to 1 and a flat term decaying slower than ``e^{-tau}`` is an error.
        """
        if kappa < 0:
            raise ValueError("kappa must be nonnegative")
        norms = opnorm(self.coef)
        sharp = self.is_sharp
        if strict and np.any(self.lam.real[~sharp] > -1.0):
            raise ValueError("flat term decays slower than rate 1")
        weights = np.exp(kappa * np.abs(self.alpha[sharp]).sum(axis=1))
        return float(np.sum(weights * norms[sharp]) + np.sum(norms[~sharp]))

    def sup_bound(self):
        """Rigorous upper bound on ``sup_tau |p(tau)|`` (sum of coefficient norms)."""
        return float(np.sum(opnorm(self.coef)))

    def sup_norm_grid(self, taus):
        """Max over the sample times of the operator norm of ``p(tau)``."""
        vals = self.evaluate(np.asarray(taus, dtype=float).ravel())
        return float(opnorm(vals).max()) if vals.size else 0.0

    # -- evaluation -----------------------------------------------------
    def evaluate(self, tau, chunk=1 << 15):
        """
        Evaluate at ``tau`` (scalar gives ``(d, d)``, array gives ``(N, d, d)``).
        """
        tau_arr = np.asarray(tau, dtype=float)
        scalar = tau_arr.ndim == 0
        taus = tau_arr.reshape(-1)
        d = self.dim
        out = np.zeros((taus.size, d, d), complex)
        if len(self):
            z = self.exponents
            flat_coef = self.coef.reshape(len(self), d * d)
            for s in range(0, taus.size, chunk):
                t = taus[s:s + chunk]
                out[s:s + chunk] = (np.exp(np.outer(t, z)) @ flat_coef).reshape(-1, d, d)
        return out[0] if scalar else out.reshape(tau_arr.shape + (d, d))

    __call__ = evaluate

    def window_integral(self, t_start, h, eps, chunk=1 << 15):
        """
        ``int_{t}^{t+h} p(sigma/eps) d sigma`` for each start ``t`` (vectorized).

        The mean term integrates as ``h * C``; every other term uses its exact
        antiderivative, written with ``expm1`` to avoid cancellation for small ``h/eps``.
        """
        t_start = np.atleast_1d(np.asarray(t_start, dtype=float))
        d = self.dim
        out = np.zeros((t_start.size, d, d), complex)
        out += h * self.average()
        if eps == 0:
            return out
        mean_mask = self.is_sharp & np.all(self.alpha == 0, axis=1)
        keep = ~mean_mask
        if not keep.any():
            return out
        z = self.exponents[keep]
        coef = (self.coef[keep] / z[:, None, None]).reshape(-1, d * d)
        growth = np.expm1(z * (h / eps))
        for s in range(0, t_start.size, chunk):
            tau = t_start[s:s + chunk] / eps
            out[s:s + chunk] += eps * ((np.exp(np.outer(tau, z)) * growth) @ coef).reshape(-1, d, d)
        return out

    # -- comparison -----------------------------------------------------
    def max_coeff_diff(self, other):
        """Largest coefficientwise operator-norm difference between two polynomials."""
        diff = self - other
        return float(opnorm(diff.coef).max()) if len(diff) else 0.0

    def allclose(self, other, atol=1e-12):
        return self.max_coeff_diff(other) <= atol

    # -- serialization --------------------------------------------------
    def to_dict(self):
        return {
            "freq": self.freq.to_dict(),
            "dim": self.dim,
            "terms": [
                {"alpha": [int(x) for x in a],
                 "lambda": [float(l.real), float(l.imag)],
                 "coeff": [[float(c.real), float(c.imag)] for c in C.ravel()]}
                for a, l, C in zip(self.alpha, self.lam, self.coef)
            ],
        }

    @classmethod
    def from_dict(cls, doc, max_mode=DEFAULT_MAX_MODE):
        freq = FrequencyVector.from_dict(doc["freq"])
        dim = int(doc["dim"])
        terms = doc["terms"]
        if not terms:
            return cls.zero(freq, dim, max_mode)
        alpha = np.array([t["alpha"] for t in terms], dtype=np.int64).reshape(-1, freq.r)
        lam = np.array([complex(*t["lambda"]) for t in terms])
        coef = np.array([[complex(*c) for c in t["coeff"]] for t in terms]).reshape(-1, dim, dim)
        # stored documents are canonical; skip re-canonicalization to stay bit-faithful
        return cls(freq, dim, alpha, lam, coef, max_mode)

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def __repr__(self):
        return (f"ExpTrigPoly(dim={self.dim}, r={self.freq.r}, terms={len(self)}, "
                f"sharp={int(self.is_sharp.sum())}, flat={int((~self.is_sharp).sum())})")
