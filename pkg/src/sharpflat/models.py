"""
Concrete forcings: a scalar test problem with a known solution, and the
population rate equation of a driven, damped multi-level quantum system.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from importlib import resources

import numpy as np

from .algebra import ExpTrigPoly, FrequencyVector
from .averaging import SharpFlatField

IMAG_TOL = 1e-10


def real_part(values, tol=IMAG_TOL):
    """Strip the imaginary part after checking it is negligible."""
    values = np.asarray(values)
    if np.iscomplexobj(values):
        residue = float(np.max(np.abs(values.imag))) if values.size else 0.0
        scale = max(1.0, float(np.max(np.abs(values.real)))) if values.size else 1.0
        if residue > tol * scale:
            raise ValueError(f"imaginary residue {residue:.3e} exceeds tolerance")
        return values.real.copy()
    return values


# --------------------------------------------------------------------------
# scalar test problem

@dataclass(frozen=True)
class ToyConfig:
    """
    Scalar field ``a = -1 + (1/r) sum_p cos(omega_p tau) + gamma exp(-tau)``.

    Parameters
    ----------
    omega : tuple of float
        Base frequencies.
    gamma : float
        Amplitude of the decaying part.
    u0 : float
        Initial value.
    T : float
        Final time.
    """

    omega: tuple = (math.pi,)
    gamma: float = 0.0
    u0: float = 1.0
    T: float = 10.0

    def __post_init__(self):
        object.__setattr__(self, "omega", tuple(float(w) for w in self.omega))
        if not self.omega or any(w == 0 for w in self.omega):
            raise ValueError("frequencies must be nonzero")
        if self.T <= 0:
            raise ValueError("T must be positive")

    @property
    def r(self):
        return len(self.omega)

    def frequency_vector(self) -> FrequencyVector:
        return FrequencyVector.from_omega(self.omega)


def toy_sharp_oscillation(cfg: ToyConfig, freq=None) -> ExpTrigPoly:
    """``b(tau) = (1/r) sum_p cos(omega_p tau)``."""
    freq = freq or cfg.frequency_vector()
    out = ExpTrigPoly.zero(freq)
    for p in range(cfg.r):
        out = out + ExpTrigPoly.cos(freq, p, 1.0 / cfg.r)
    return out


def toy_flat_part(cfg: ToyConfig, freq=None) -> ExpTrigPoly:
    freq = freq or cfg.frequency_vector()
    return ExpTrigPoly.exp(freq, -1.0, cfg.gamma)


def toy_field(cfg: ToyConfig, **kwargs) -> SharpFlatField:
    """The scalar test field as a :class:`SharpFlatField`."""
    freq = cfg.frequency_vector()
    a = ExpTrigPoly.constant(freq, [[-1.0]]) + toy_sharp_oscillation(cfg, freq) + toy_flat_part(cfg, freq)
    return SharpFlatField(a, **kwargs)


def toy_primitive_b(cfg: ToyConfig, tau):
    """``B(tau) = (1/r) sum_p sin(omega_p tau) / omega_p``."""
    tau = np.asarray(tau, dtype=float)
    return sum(np.sin(w * tau) / w for w in cfg.omega) / cfg.r


def toy_exact(cfg: ToyConfig, eps, t):
    """Closed-form solution at times ``t``."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    t = np.asarray(t, dtype=float)
    tau = t / eps
    return cfg.u0 * np.exp(-t + eps * (toy_primitive_b(cfg, tau) + cfg.gamma - cfg.gamma * np.exp(-tau)))


def toy_limit(cfg: ToyConfig, t):
    """Limit solution ``u0 exp(-t)`` as ``eps -> 0``."""
    return cfg.u0 * np.exp(-np.asarray(t, dtype=float))


# --------------------------------------------------------------------------
# rate equation

@dataclass(frozen=True)
class BlochConfig:
    """
    Driven multi-level system reduced to its populations.

    ``variant`` is ``"with_flat"`` to keep the decaying memory part of the rates
    and ``"osc_only"`` to drop it.
    """

    energies: tuple = (0.0, 2.0, 3.0)
    gamma: tuple = ((0.0, 1.0, 1.0), (1.0, 0.0, 1.0), (1.0, 1.0, 0.0))
    dipole: tuple = ((0.0, 1.0, 1.0), (1.0, 0.0, 1.0), (1.0, 1.0, 0.0))
    omega: tuple = (math.pi,)
    E0: float = 1.0
    rho_init: tuple = (0.0, 0.0, 1.0)
    variant: str = "with_flat"
    T: float = 10.0

    def __post_init__(self):
        E = np.asarray(self.energies, dtype=float)
        n = E.size
        g = np.asarray(self.gamma, dtype=float)
        p = np.asarray(self.dipole, dtype=complex)
        rho = np.asarray(self.rho_init, dtype=float)
        if g.shape != (n, n) or p.shape != (n, n) or rho.shape != (n,):
            raise ValueError("inconsistent level counts")
        off = ~np.eye(n, dtype=bool)
        if not np.allclose(g, g.T) or np.any(np.diag(g) != 0) or np.any(g[off] <= 0):
            raise ValueError("relaxation matrix must be symmetric, positive off-diagonal, zero diagonal")
        if not np.allclose(p, p.conj().T):
            raise ValueError("dipole matrix must be Hermitian")
        if np.any(rho < 0) or not math.isclose(rho.sum(), 1.0, abs_tol=1e-12):
            raise ValueError("initial populations must be nonnegative and sum to 1")
        if self.variant not in ("with_flat", "osc_only"):
            raise ValueError("variant must be 'with_flat' or 'osc_only'")
        if not self.omega or any(w == 0 for w in self.omega):
            raise ValueError("frequencies must be nonzero")

    @property
    def levels(self):
        return len(self.energies)

    @property
    def r(self):
        return len(self.omega)

    def Omega(self):
        """``Omega_lj = -i (E_l - E_j) - gamma_lj``."""
        E = np.asarray(self.energies, dtype=float)
        return -1j * (E[:, None] - E[None, :]) - np.asarray(self.gamma, dtype=float)

    def frequency_vector(self) -> FrequencyVector:
        return FrequencyVector.from_omega(self.omega)


def bloch_RS(tau, omega, Omega):
    """
    Coefficients ``R = Re(omega e^{Omega tau} / (omega^2 + Omega^2))`` and
    ``S = -Re(Omega e^{Omega tau} / (omega^2 + Omega^2))``.
    """
    den = omega ** 2 + Omega ** 2
    if np.any(np.abs(den) == 0):
        raise ZeroDivisionError("omega^2 + Omega^2 vanishes (undamped resonance)")
    growth = np.exp(Omega * np.asarray(tau, dtype=float))
    return (omega * growth / den).real, -(Omega * growth / den).real


def _rate_prefactor(cfg: BlochConfig):
    p2 = np.abs(np.asarray(cfg.dipole, dtype=complex)) ** 2
    return 2.0 * cfg.E0 ** 2 * p2 / cfg.r ** 2


def _psi_entries(cfg: BlochConfig, freq, with_flat):
    K = _rate_prefactor(cfg)
    Om = cfg.Omega()
    n = cfg.levels
    entries = {}
    for l in range(n):
        for j in range(n):
            if l == j or K[l, j] == 0:
                continue
            sharp = ExpTrigPoly.zero(freq)
            flat = ExpTrigPoly.zero(freq)
            for p1 in range(cfg.r):
                c1 = ExpTrigPoly.cos(freq, p1)
                for p2, w2 in enumerate(cfg.omega):
                    R0, S0 = bloch_RS(0.0, w2, Om[l, j])
                    sharp = sharp + c1 @ (ExpTrigPoly.sin(freq, p2, R0) + ExpTrigPoly.cos(freq, p2, S0))
                    if with_flat:
                        # S(tau) = -(c e^{Omega tau} + conj(c) e^{conj(Omega) tau}) / 2
                        coef = Om[l, j] / (w2 ** 2 + Om[l, j] ** 2)
                        s_tau = (ExpTrigPoly.exp(freq, Om[l, j], -0.5 * coef)
                                 + ExpTrigPoly.exp(freq, np.conj(Om[l, j]), -0.5 * np.conj(coef)))
                        flat = flat - c1 @ s_tau
            entries[(l, j)] = (sharp + flat) * K[l, j]
    return entries


def bloch_psi(cfg: BlochConfig) -> ExpTrigPoly:
    """Transition-rate matrix including its decaying part."""
    freq = cfg.frequency_vector()
    return ExpTrigPoly.from_entries(freq, cfg.levels, _psi_entries(cfg, freq, True))


def bloch_psi_inf(cfg: BlochConfig) -> ExpTrigPoly:
    """Transition-rate matrix with the memory integral taken to infinity (sharp only)."""
    freq = cfg.frequency_vector()
    return ExpTrigPoly.from_entries(freq, cfg.levels, _psi_entries(cfg, freq, False))


def bloch_psi_average(cfg: BlochConfig) -> np.ndarray:
    """Closed-form averaged rate ``<Psi>``."""
    K = _rate_prefactor(cfg) / 2.0
    Om = cfg.Omega()
    out = np.zeros((cfg.levels, cfg.levels))
    for l in range(cfg.levels):
        for j in range(cfg.levels):
            if l != j:
                out[l, j] = K[l, j] * sum(bloch_RS(0.0, w, Om[l, j])[1] for w in cfg.omega)
    return out


def bloch_psi_quadrature(cfg: BlochConfig, tau, l, j):
    """Rate entry ``(l, j)`` at ``tau`` by adaptive quadrature of its memory integral."""
    from scipy.integrate import quad

    Om = cfg.Omega()[l, j]

    def V(s):
        return cfg.E0 / cfg.r * sum(math.cos(w * s) for w in cfg.omega)

    re = quad(lambda s: math.exp(Om.real * s) * math.cos(Om.imag * s) * V(tau - s), 0.0, tau,
              limit=400, epsabs=1e-13, epsrel=1e-12)[0]
    p2 = abs(complex(np.asarray(cfg.dipole)[l, j])) ** 2
    return 2.0 * p2 * V(tau) * re


def bloch_rate_field(psi: ExpTrigPoly, **kwargs) -> SharpFlatField:
    """
    Rate matrix ``a`` with ``a_jk = Psi_kj`` off the diagonal and ``a_jj = -sum_{l != j} Psi_lj``.
    """
    n = psi.dim
    # a = Psi^T - diag(column sums of Psi)
    def assemble(C):
        out = C.transpose(0, 2, 1).copy()
        col = C.sum(axis=1)
        idx = np.arange(n)
        out[:, idx, idx] -= col
        return out

    return SharpFlatField(psi.map_coefficients(assemble), **kwargs)


def bloch_field(cfg: BlochConfig, **kwargs) -> SharpFlatField:
    """Rate field for ``cfg.variant``."""
    psi = bloch_psi(cfg) if cfg.variant == "with_flat" else bloch_psi_inf(cfg)
    return bloch_rate_field(psi, **kwargs)


def bloch_upsilon_inf(cfg: BlochConfig) -> ExpTrigPoly:
    """
    Closed-form ``int_0^tau (Psi^inf - <Psi>)`` for a single frequency.
    """
    if cfg.r != 1:
        raise ValueError("closed form available for a single frequency only")
    freq = cfg.frequency_vector()
    w = cfg.omega[0]
    Om = cfg.Omega()
    p2 = np.abs(np.asarray(cfg.dipole, dtype=complex)) ** 2
    s = ExpTrigPoly.sin(freq, 0)
    c = ExpTrigPoly.cos(freq, 0)
    entries = {}
    for l in range(cfg.levels):
        for j in range(cfg.levels):
            if l == j:
                continue
            R, S = bloch_RS(0.0, w, Om[l, j])
            entries[(l, j)] = (s @ s * R + s @ c * S) * (cfg.E0 ** 2 * p2[l, j] / w)
    return ExpTrigPoly.from_entries(freq, cfg.levels, entries)


def bloch_upsilon_average(cfg: BlochConfig) -> np.ndarray:
    """``<Upsilon^inf>_lj = E0^2 |p_lj|^2 R_lj / (2 omega)``."""
    w = cfg.omega[0]
    p2 = np.abs(np.asarray(cfg.dipole, dtype=complex)) ** 2
    R = bloch_RS(0.0, w, cfg.Omega())[0]
    out = cfg.E0 ** 2 * p2 * R / (2 * w)
    np.fill_diagonal(out, 0.0)
    return out


def bloch_product_average(cfg: BlochConfig, l, j, k, i) -> float:
    """``<Psi^inf_lj Upsilon^inf_ki>`` in closed form (single frequency)."""
    w = cfg.omega[0]
    p2 = np.abs(np.asarray(cfg.dipole, dtype=complex)) ** 2
    R, S = bloch_RS(0.0, w, cfg.Omega())
    return cfg.E0 ** 4 * p2[l, j] * p2[k, i] / (4 * w) * (R[l, j] * S[k, i] + S[l, j] * R[k, i])


# --------------------------------------------------------------------------
# config files

def _jsonable(cfg):
    d = asdict(cfg)
    for key, value in d.items():
        if isinstance(value, tuple):
            d[key] = np.asarray(value).tolist()
    if isinstance(cfg, BlochConfig):
        d["dipole"] = [[[complex(x).real, complex(x).imag] for x in row] for row in cfg.dipole]
    return d


def config_to_dict(cfg):
    kind = "toy" if isinstance(cfg, ToyConfig) else "bloch"
    return {"kind": kind, **_jsonable(cfg)}


def config_from_dict(doc):
    doc = dict(doc)
    kind = doc.pop("kind")
    if kind == "toy":
        return ToyConfig(omega=tuple(doc["omega"]), gamma=doc["gamma"], u0=doc["u0"], T=doc["T"])
    if kind == "bloch":
        dipole = tuple(tuple(complex(*x) if isinstance(x, list) else x for x in row) for row in doc["dipole"])
        return BlochConfig(
            energies=tuple(doc["energies"]),
            gamma=tuple(tuple(row) for row in doc["gamma"]),
            dipole=dipole,
            omega=tuple(doc["omega"]),
            E0=doc["E0"],
            rho_init=tuple(doc["rho_init"]),
            variant=doc["variant"],
            T=doc["T"],
        )
    raise ValueError(f"unknown config kind {kind!r}")


def save_config(cfg, path):
    with open(path, "w") as fh:
        json.dump(config_to_dict(cfg), fh, indent=2)
        fh.write("\n")


def load_config(path):
    with open(path) as fh:
        return config_from_dict(json.load(fh))


PRESET_NAMES = ("toy-1F", "toy-1F-flat", "toy-3F", "toy-3F-flat", "bloch-1F", "bloch-3F")


def preset_config(name: str):
    """Load a shipped preset configuration by name."""
    if name not in PRESET_NAMES:
        raise KeyError(f"unknown preset {name!r}; choose from {', '.join(PRESET_NAMES)}")
    text = resources.files("sharpflat").joinpath("presets", f"{name}.json").read_text()
    return config_from_dict(json.loads(text))
