"""
One-step schemes for the micro-macro system

    v' = A v,             v(0) = Phi(0)^{-1} u0,
    w' = a(t/eps) w - delta(t/eps) v,   w(0) = 0,

and for the original stiff problem ``u' = a(t/eps) u``.

Every scheme is linear, so one step is a matrix ``G_l`` acting on ``y = (v, w)``.
The solvers build these matrices in vectorized chunks and then propagate.
"""
from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass, field

import numpy as np

from .algebra import ExpTrigPoly
from .averaging import MicroMacroDecomposition, SharpFlatField, warn_if_beyond
from .errors import StabilityError

STABILITY_LIMIT = 1e12
COND_LIMIT = 1e12
CHUNK = 1 << 14


class Scheme(str, enum.Enum):
    EE = "EE"
    EEint = "EEint"
    RK2 = "RK2"
    RK2int = "RK2int"

    @property
    def order(self):
        return 1 if self in (Scheme.EE, Scheme.EEint) else 2

    @property
    def integral(self):
        return self in (Scheme.EEint, Scheme.RK2int)


@dataclass
class MicroMacroState:
    v: np.ndarray
    w: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.v = np.asarray(self.v, dtype=complex).reshape(-1)
        self.w = np.asarray(self.w, dtype=complex).reshape(-1)
        if self.v.shape != self.w.shape:
            raise ValueError("v and w must have the same dimension")

    @property
    def y(self):
        return np.concatenate([self.v, self.w])


@dataclass
class Trajectory:
    """
    States on the uniform grid ``t_l = l * dt`` (possibly subsampled by ``stride``).

    For micro-macro runs ``v`` and ``w`` are set and ``u`` is the reconstruction;
    direct runs only carry ``u``.
    """

    t: np.ndarray
    u: np.ndarray
    v: np.ndarray = None
    w: np.ndarray = None
    meta: dict = field(default_factory=dict)

    @property
    def dt(self):
        return self.meta["dt"]

    @property
    def steps(self):
        return self.meta["L"]

    def to_csv(self, path_or_buffer=None):
        """Write the header block and columns ``t, Re/Im`` of each stored component."""
        buf = io.StringIO()
        for key in sorted(self.meta):
            buf.write(f"# {key}={self.meta[key]}\n")
        cols = {"t": [self.t]}
        names = ["t"]
        for label, arr in (("v", self.v), ("w", self.w), ("u", self.u)):
            if arr is None:
                continue
            for i in range(arr.shape[1]):
                names += [f"re_{label}{i}", f"im_{label}{i}"]
                cols[f"re_{label}{i}"] = [arr[:, i].real]
                cols[f"im_{label}{i}"] = [arr[:, i].imag]
        data = np.column_stack([cols[n][0] for n in names])
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(names)
        for row in data:
            writer.writerow([repr(float(x)) for x in row])
        text = buf.getvalue()
        if path_or_buffer is None:
            return text
        if hasattr(path_or_buffer, "write"):
            path_or_buffer.write(text)
        else:
            with open(path_or_buffer, "w") as fh:
                fh.write(text)
        return text


def _eye(n, count):
    return np.broadcast_to(np.eye(n, dtype=complex), (count, n, n))


def _block(tl, bl, br):
    """Assemble lower block-triangular ``[[tl, 0], [bl, br]]`` stacks."""
    count, d = bl.shape[0], bl.shape[1]
    out = np.zeros((count, 2 * d, 2 * d), complex)
    out[:, :d, :d] = tl
    out[:, d:, :d] = bl
    out[:, d:, d:] = br
    return out


def micro_macro_matrices(scheme, ts, h, eps, a: ExpTrigPoly, A, delta: ExpTrigPoly):
    """
    One-step matrices ``G_l`` of ``y_{l+1} = G_l y_l`` for start times ``ts``.
    """
    scheme = Scheme(scheme)
    ts = np.asarray(ts, dtype=float)
    count, d = ts.size, a.dim
    I = _eye(d, count)
    A = np.asarray(A, dtype=complex)
    if scheme is Scheme.EE:
        return _block(I + h * A, -h * delta.evaluate(ts / eps), I + h * a.evaluate(ts / eps))
    if scheme is Scheme.EEint:
        return _block(I + h * A, -delta.window_integral(ts, h, eps), I + a.window_integral(ts, h, eps))
    half_v = np.eye(d) + 0.5 * h * A
    if scheme is Scheme.RK2:
        S1 = _block(half_v, -0.5 * h * delta.evaluate(ts / eps), I + 0.5 * h * a.evaluate(ts / eps))
        mid = (ts + 0.5 * h) / eps
        F = _block(np.broadcast_to(A, (count, d, d)), -delta.evaluate(mid), a.evaluate(mid))
        return np.eye(2 * d) + h * (F @ S1)
    S1 = _block(half_v, -delta.window_integral(ts, 0.5 * h, eps), I + a.window_integral(ts, 0.5 * h, eps))
    K = _block(np.broadcast_to(h * A, (count, d, d)), -delta.window_integral(ts, h, eps),
               a.window_integral(ts, h, eps))
    return np.eye(2 * d) + K @ S1


def direct_matrices(scheme, ts, h, eps, a: ExpTrigPoly):
    """One-step matrices of the schemes applied to ``u' = a(t/eps) u``."""
    scheme = Scheme(scheme)
    ts = np.asarray(ts, dtype=float)
    I = _eye(a.dim, ts.size)
    if scheme is Scheme.EE:
        return I + h * a.evaluate(ts / eps)
    if scheme is Scheme.EEint:
        return I + a.window_integral(ts, h, eps)
    if scheme is Scheme.RK2:
        return I + h * a.evaluate((ts + 0.5 * h) / eps) @ (I + 0.5 * h * a.evaluate(ts / eps))
    return I + a.window_integral(ts, h, eps) @ (I + a.window_integral(ts, 0.5 * h, eps))


def _check_growth(states, offset):
    norms = np.abs(states).max(axis=1)
    bad = ~(norms <= STABILITY_LIMIT)
    if bad.any():
        idx = int(np.argmax(bad))
        raise StabilityError(f"state norm exceeded {STABILITY_LIMIT:g} at step {offset + idx}",
                             step=offset + idx)


def _propagate_all(G, y):
    """Apply ``G[0], G[1], ...`` successively and return every intermediate state."""
    count, m = G.shape[0], G.shape[1]
    out = np.empty((count, m), complex)
    if m == 1:
        g = G[:, 0, 0].tolist()
        x = complex(y[0])
        col = out[:, 0]
        vals = []
        for gi in g:
            x = gi * x
            vals.append(x)
        col[:] = vals
        return out
    if m == 2:
        g00, g01 = G[:, 0, 0].tolist(), G[:, 0, 1].tolist()
        g10, g11 = G[:, 1, 0].tolist(), G[:, 1, 1].tolist()
        x0, x1 = complex(y[0]), complex(y[1])
        v0, v1 = [], []
        for a00, a01, a10, a11 in zip(g00, g01, g10, g11):
            x0, x1 = a00 * x0 + a01 * x1, a10 * x0 + a11 * x1
            v0.append(x0)
            v1.append(x1)
        out[:, 0] = v0
        out[:, 1] = v1
        return out
    for i in range(count):
        y = G[i] @ y
        out[i] = y
    return out


def _run(builder, y0, L, stride):
    """
    Propagate ``y0`` through ``L`` steps whose matrices come from ``builder(l0, l1)``.

    Returns states at steps ``0, stride, 2*stride, ..., L``.
    """
    if L < 1:
        raise ValueError("L must be at least 1")
    if stride < 1 or L % stride:
        raise ValueError("stride must divide L")
    records = [np.asarray(y0, dtype=complex)]
    y = records[0]
    chunk = max(stride, (CHUNK // stride) * stride)
    for l0 in range(0, L, chunk):
        l1 = min(L, l0 + chunk)
        G = builder(l0, l1)
        if stride == 1:
            states = _propagate_all(G, y)
            _check_growth(states, l0 + 1)
            records.extend(states)
            y = states[-1]
            continue
        blocks = G.reshape((l1 - l0) // stride, stride, *G.shape[1:])
        P = blocks[:, 0]
        for s in range(1, stride):
            P = blocks[:, s] @ P
        states = _propagate_all(P, y)
        _check_growth(states, l0 + stride)
        records.extend(states)
        y = states[-1]
    return np.array(records)


def _grid(T, L):
    if L < 1:
        raise ValueError("L must be at least 1")
    dt = T / L
    return dt, np.arange(L + 1) * dt


def initial_state(dec: MicroMacroDecomposition, u0, eps) -> MicroMacroState:
    """``v(0) = Phi(0)^{-1} u0`` and ``w(0) = 0``."""
    u0 = np.atleast_1d(np.asarray(u0, dtype=complex))
    if eps == 0:
        return MicroMacroState(u0.copy(), np.zeros_like(u0), 0.0)
    warn_if_beyond(dec, eps)
    phi0 = dec.at(eps)[0].evaluate(0.0)
    cond = np.linalg.cond(phi0, 1)
    if not cond < COND_LIMIT:
        raise np.linalg.LinAlgError(f"Phi(0) is numerically singular (condition {cond:.3e})")
    return MicroMacroState(np.linalg.solve(phi0, u0), np.zeros_like(u0), 0.0)


def step(state: MicroMacroState, dec: MicroMacroDecomposition, field: SharpFlatField, eps, dt,
         scheme) -> MicroMacroState:
    """Advance ``(v, w)`` by one step of size ``dt``."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    _, A, delta = dec.at(eps)
    G = micro_macro_matrices(scheme, [state.t], dt, eps, field.a, A, delta)[0]
    y = G @ state.y
    _check_growth(y[None], 1)
    d = state.v.size
    return MicroMacroState(y[:d], y[d:], state.t + dt)


def reconstruct(dec: MicroMacroDecomposition, state, eps, drop_w=False):
    """
    ``u = Phi(t/eps) v + w`` for a state or for stacked arrays ``(t, v, w)``.
    """
    phi = dec.at(eps)[0]
    if isinstance(state, MicroMacroState):
        u = phi.evaluate(state.t / eps) @ state.v
        return u if drop_w else u + state.w
    t, v, w = state
    u = np.einsum("nij,nj->ni", phi.evaluate(np.asarray(t) / eps), v)
    return u if drop_w else u + w


def solve_micro_macro(dec: MicroMacroDecomposition, field: SharpFlatField, u0, T, L, eps, scheme,
                      record_stride=1, drop_w=False) -> Trajectory:
    """
    Integrate the micro-macro system on ``L`` uniform steps over ``[0, T]``.

    With ``drop_w=True`` the reconstruction ignores the micro part.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    scheme = Scheme(scheme)
    dt, grid = _grid(T, L)
    state = initial_state(dec, u0, eps)
    _, A, delta = dec.at(eps)
    d = field.dim

    def builder(l0, l1):
        return micro_macro_matrices(scheme, grid[l0:l1], dt, eps, field.a, A, delta)

    ys = _run(builder, state.y, L, record_stride)
    t = grid[::record_stride]
    v, w = ys[:, :d], ys[:, d:]
    u = reconstruct(dec, (t, v, w), eps, drop_w=drop_w)
    meta = {"kind": "micro_macro", "scheme": scheme.value, "n": dec.n, "eps": eps, "dt": dt, "L": L,
            "T": T, "stride": record_stride}
    return Trajectory(t, u, v, w, meta)


def solve_direct(field: SharpFlatField, u0, T, L, eps, scheme, record_stride=1) -> Trajectory:
    """Apply a scheme to the stiff problem ``u' = a(t/eps) u``."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    scheme = Scheme(scheme)
    dt, grid = _grid(T, L)
    u0 = np.atleast_1d(np.asarray(u0, dtype=complex))

    def builder(l0, l1):
        return direct_matrices(scheme, grid[l0:l1], dt, eps, field.a)

    us = _run(builder, u0, L, record_stride)
    meta = {"kind": "direct", "scheme": scheme.value, "eps": eps, "dt": dt, "L": L, "T": T,
            "stride": record_stride}
    return Trajectory(grid[::record_stride], us, meta=meta)
