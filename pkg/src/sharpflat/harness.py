"""
Error studies: run (dt, eps) sweeps, measure errors against exact or fine
reference solutions, fit convergence orders and write CSV tables.
"""
from __future__ import annotations

import csv
import json
import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .averaging import MicroMacroDecomposition, SharpFlatField, iterate
from .errors import GridMismatchError, InsufficientDataError, StabilityError
from .integrators import Scheme, Trajectory, solve_direct, solve_micro_macro
from .models import BlochConfig, ToyConfig, bloch_field, load_config, preset_config, toy_exact, toy_field

REFERENCE_ACCURACY = 1e-5
"""Accuracy claimed for the fine EEint reference at ``dt_ref = 5e-6``."""

MODES = ("micro_macro", "direct", "macro_only")
REFERENCES = ("exact", "fine_EEint")


@dataclass(frozen=True)
class Problem:
    """
    A forcing together with its initial data and time scaling.

    ``eps_power`` maps the user-facing ``eps`` to the fast-time parameter of the
    field: the fast time is ``t / eps**eps_power``.
    """

    name: str
    config: object
    field: SharpFlatField

    @property
    def T(self):
        return self.config.T

    @property
    def u0(self):
        if isinstance(self.config, ToyConfig):
            return np.array([self.config.u0], dtype=complex)
        return np.asarray(self.config.rho_init, dtype=complex)

    @property
    def eps_power(self):
        return 2 if isinstance(self.config, BlochConfig) else 1

    @property
    def is_bloch(self):
        return isinstance(self.config, BlochConfig)

    def fast_eps(self, eps):
        return eps ** self.eps_power

    def exact(self, eps, t):
        """Exact solution as an ``(N, 1)`` array, or ``None`` when unknown."""
        if isinstance(self.config, ToyConfig):
            return toy_exact(self.config, eps, t).reshape(-1, 1)
        return None

    @property
    def has_exact(self):
        return isinstance(self.config, ToyConfig)


def build_problem(config, name=None) -> Problem:
    if isinstance(config, ToyConfig):
        fld = toy_field(config)
    elif isinstance(config, BlochConfig):
        fld = bloch_field(config)
    else:
        raise TypeError(f"unsupported config {type(config).__name__}")
    return Problem(name or "custom", config, fld)


@lru_cache(maxsize=None)
def get_problem(name: str) -> Problem:
    """Problem built from a shipped preset name (cached)."""
    return build_problem(preset_config(name), name)


@lru_cache(maxsize=None)
def get_decomposition(name: str, n: int, c: float = 0.5) -> MicroMacroDecomposition:
    return iterate(get_problem(name).field, n, c)


def default_dt_grid(T):
    return [T / 2 ** k for k in range(4, 15)]


def default_eps_grid():
    return list(np.geomspace(0.5, 1e-4, 13))


@dataclass
class SweepConfig:
    """
    Description of one error study.

    ``steps`` lists the numbers of time steps ``L``; ``dt = T / L``. ``dt_ref``
    only matters for the ``fine_EEint`` reference.
    """

    problem: str
    n: int
    scheme: str
    steps: list
    eps: list
    mode: str = "micro_macro"
    reference: str = "exact"
    dt_ref: float = 5e-6
    c: float = 0.5
    workers: int = 1
    config_path: str = None
    noise_floor: object = None

    def __post_init__(self):
        self.scheme = Scheme(self.scheme).value
        self.steps = [int(L) for L in self.steps]
        self.eps = [float(e) for e in self.eps]
        if not self.steps:
            raise ValueError("the time-step grid is empty")
        if not self.eps:
            raise ValueError("the eps grid is empty")
        if any(L < 1 for L in self.steps):
            raise ValueError("step counts must be positive")
        if any(e <= 0 for e in self.eps):
            raise ValueError("eps values must be positive")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.reference not in REFERENCES:
            raise ValueError(f"reference must be one of {REFERENCES}")
        if self.n < 0:
            raise ValueError("order must be nonnegative")
        if isinstance(self.noise_floor, str) and self.noise_floor != "measured":
            raise ValueError("noise_floor must be a number, 'measured' or null")

    def load_problem(self) -> Problem:
        if self.config_path:
            return build_problem(load_config(self.config_path), self.problem)
        return get_problem(self.problem)

    def dts(self, T):
        return [T / L for L in self.steps]

    @classmethod
    def from_dict(cls, doc):
        doc = dict(doc)
        if "dt" in doc:
            T = doc.pop("T", None)
            if T is None:
                path = doc.get("config_path")
                T = (load_config(path) if path else preset_config(doc["problem"])).T
            doc["steps"] = [int(round(T / dt)) for dt in _expand_grid(doc.pop("dt"))]
        else:
            doc["steps"] = [int(x) for x in _expand_grid(doc["steps"])]
        doc["eps"] = _expand_grid(doc["eps"])
        return cls(**doc)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self):
        return {k: getattr(self, k) for k in ("problem", "n", "scheme", "steps", "eps", "mode",
                                               "reference", "dt_ref", "c", "workers", "config_path",
                                               "noise_floor")}


def _expand_grid(spec):
    """A list, or ``{"geomspace": [start, stop, num]}``."""
    if isinstance(spec, dict):
        if "geomspace" in spec:
            start, stop, num = spec["geomspace"]
            return [float(x) for x in np.geomspace(start, stop, int(num))]
        raise ValueError(f"unknown grid spec {spec}")
    return [float(x) for x in spec]


@dataclass
class ErrorRecord:
    problem: str
    scheme: str
    n: int
    eps: float
    dt: float
    error: float
    runtime_s: float = float("nan")
    min_population: float = float("nan")
    flags: tuple = ()

    @property
    def blowup(self):
        return "blowup" in self.flags


def compute_error(traj: Trajectory, reference, eps=None) -> float:
    """
    ``max_l |u_l - u_ref(t_l)|_1`` over the trajectory grid.

    ``reference`` is either a :class:`Trajectory` on a grid that refines the
    trajectory's, or a callable ``reference(t) -> (N, d)`` array.
    """
    if callable(reference) and not isinstance(reference, Trajectory):
        ref = np.asarray(reference(traj.t)).reshape(traj.u.shape)
        return float(np.max(np.abs(traj.u - ref).sum(axis=1)))
    if reference.t[-1] != traj.t[-1] and not math.isclose(reference.t[-1], traj.t[-1], rel_tol=1e-12):
        raise GridMismatchError("trajectories do not share the final time")
    n_traj, n_ref = traj.t.size - 1, reference.t.size - 1
    if n_ref % n_traj:
        raise GridMismatchError(f"{n_traj} intervals do not divide {n_ref} reference intervals")
    ref = reference.u[:: n_ref // n_traj]
    return float(np.max(np.abs(traj.u - ref).sum(axis=1)))


class ReferenceCache:
    """Fine EEint direct solutions per eps, recorded on a grid shared by every coarse run."""

    def __init__(self, problem: Problem, dt_ref: float, steps):
        self.problem = problem
        self.L_ref = int(round(problem.T / dt_ref))
        if not math.isclose(self.L_ref * dt_ref, problem.T, rel_tol=1e-9):
            raise GridMismatchError("dt_ref does not divide the final time")
        for L in steps:
            if self.L_ref % L:
                raise GridMismatchError(f"L={L} does not divide L_ref={self.L_ref}")
        lcm = 1
        for L in steps:
            lcm = lcm * L // math.gcd(lcm, L)
        self.stride = self.L_ref // lcm
        self._store = {}

    def accuracy_estimate(self, eps):
        """
        Estimated error of the reference at ``eps``: twice its distance to a
        half-step solution (the scheme is first order).
        """
        if ("accuracy", eps) not in self._store:
            fine = solve_direct(self.problem.field, self.problem.u0, self.problem.T, 2 * self.L_ref,
                                self.problem.fast_eps(eps), Scheme.EEint, record_stride=2 * self.stride)
            self._store[("accuracy", eps)] = 2.0 * compute_error(self(eps), fine)
        return self._store[("accuracy", eps)]

    def __call__(self, eps):
        if eps not in self._store:
            self._store[eps] = solve_direct(self.problem.field, self.problem.u0, self.problem.T, self.L_ref,
                                            self.problem.fast_eps(eps), Scheme.EEint, record_stride=self.stride)
        return self._store[eps]


def noise_floor(cfg: SweepConfig, references=None, probe_eps=None):
    """
    Error level under which points are dropped from order fits (before the 10x margin).

    Exact references have no floor. For fine references the floor is the configured
    number, or with ``"measured"`` the largest accuracy estimate over ``probe_eps``
    (default: smallest, middle and largest eps of the sweep).
    """
    if cfg.reference == "exact":
        return 0.0
    if cfg.noise_floor is None:
        return REFERENCE_ACCURACY
    if cfg.noise_floor != "measured":
        return float(cfg.noise_floor)
    problem = cfg.load_problem()
    references = references or ReferenceCache(problem, cfg.dt_ref, cfg.steps)
    eps = sorted(cfg.eps)
    probe_eps = probe_eps or sorted({eps[0], eps[len(eps) // 2], eps[-1]})
    return max(references.accuracy_estimate(e) for e in probe_eps)


def _run_one(cfg: SweepConfig, problem: Problem, dec, L, eps, reference):
    fast = problem.fast_eps(eps)
    flags = []
    start = time.perf_counter()
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            if cfg.mode == "direct":
                traj = solve_direct(problem.field, problem.u0, problem.T, L, fast, cfg.scheme)
            else:
                traj = solve_micro_macro(dec, problem.field, problem.u0, problem.T, L, fast, cfg.scheme,
                                         drop_w=cfg.mode == "macro_only")
        if reference is None:
            err = compute_error(traj, lambda t: problem.exact(eps, t))
        else:
            err = compute_error(traj, reference)
        min_pop = float(traj.u.real.min()) if problem.is_bloch else float("nan")
    except StabilityError:
        err, min_pop = float("inf"), float("nan")
        flags.append("blowup")
    if not math.isfinite(err):
        if "blowup" not in flags:
            flags.append("blowup")
        err = float("inf")
    if dec is not None and cfg.mode != "direct" and fast > dec.eps_n:
        flags.append("beyond_eps_n")
    runtime = time.perf_counter() - start
    return ErrorRecord(problem.name, cfg.scheme, cfg.n, eps, problem.T / L, err, runtime, min_pop, tuple(flags))


def run_sweep(cfg: SweepConfig, references=None) -> list:
    """
    Evaluate every ``(eps, L)`` pair of ``cfg``; records come back sorted by ``(eps, dt)``.

    ``references`` may supply a :class:`ReferenceCache` to share fine solutions between sweeps.
    """
    problem = cfg.load_problem()
    if cfg.reference == "exact" and not problem.has_exact:
        raise ValueError(f"problem {cfg.problem!r} has no exact solution; use the fine_EEint reference")
    if cfg.reference == "fine_EEint" and cfg.dt_ref * 10 > min(cfg.dts(problem.T)) * (1 + 1e-12):
        raise ValueError("dt_ref must be at least 10 times smaller than every dt")
    if cfg.mode != "direct" and Scheme(cfg.scheme).order > cfg.n and not Scheme(cfg.scheme).integral:
        warnings.warn(f"scheme order {Scheme(cfg.scheme).order} exceeds decomposition order {cfg.n}",
                      RuntimeWarning, stacklevel=2)
    dec = None
    if cfg.mode != "direct":
        dec = (get_decomposition(cfg.problem, cfg.n, cfg.c) if not cfg.config_path
               else iterate(problem.field, cfg.n, cfg.c))
    if cfg.reference == "fine_EEint":
        references = references or ReferenceCache(problem, cfg.dt_ref, cfg.steps)
    jobs = [(eps, L) for eps in sorted(cfg.eps) for L in sorted(cfg.steps, reverse=True)]

    def work(job):
        eps, L = job
        ref = references(eps) if cfg.reference == "fine_EEint" else None
        return _run_one(cfg, problem, dec, L, eps, ref)

    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            records = list(pool.map(work, jobs))
    else:
        records = [work(job) for job in jobs]
    records.sort(key=lambda r: (r.eps, r.dt))
    return records


@dataclass
class OrderFit:
    slope: float
    intercept: float
    points: int
    excluded: int = 0

    def predict(self, dt):
        return math.exp(self.intercept) * np.asarray(dt) ** self.slope


def fit_order(records, floor=0.0, x="dt") -> OrderFit:
    """
    Least-squares slope of ``log E`` against ``log dt`` (or ``log eps`` with ``x="eps"``).

    Blowups and points with ``E <= 10 * floor`` are discarded; at least three points
    spanning one decade must remain.
    """
    xs, ys = [], []
    excluded = 0
    for r in records:
        value = getattr(r, x)
        if r.blowup or not math.isfinite(r.error) or r.error <= 10 * floor or r.error <= 0:
            excluded += 1
            continue
        xs.append(math.log(value))
        ys.append(math.log(r.error))
    if len(xs) < 3:
        raise InsufficientDataError(f"{len(xs)} usable points; at least 3 are needed")
    if max(xs) - min(xs) < math.log(10) * (1 - 1e-9):
        raise InsufficientDataError("usable points span less than one decade")
    slope, intercept = np.polyfit(np.array(xs), np.array(ys), 1)
    return OrderFit(float(slope), float(intercept), len(xs), excluded)


def group_by(records, key):
    out = {}
    for r in records:
        out.setdefault(getattr(r, key), []).append(r)
    return out


def fit_by_eps(records, floor=0.0):
    """One fitted order per eps value."""
    return {eps: fit_order(recs, floor) for eps, recs in sorted(group_by(records, "eps").items())}


def uniformity_ratio(records, eps_max=None):
    """Largest per-dt ratio ``max_eps E / min_eps E`` (optionally restricted to ``eps <= eps_max``)."""
    worst = 0.0
    for _, recs in group_by(records, "dt").items():
        errs = [r.error for r in recs if eps_max is None or r.eps <= eps_max * (1 + 1e-12)]
        if len(errs) >= 2:
            worst = max(worst, max(errs) / min(errs))
    return worst


# --------------------------------------------------------------------------
# output

CSV_COLUMNS = ("problem", "scheme", "n", "eps", "dt", "error", "runtime_s", "flags")


def _fmt(x):
    return "inf" if x == float("inf") else repr(float(x))


def emit(records, out_dir, prefix="sweep", include_timing=False):
    """
    Write ``<prefix>.csv`` plus the plot tables ``<prefix>_by_dt.csv`` (one series
    per dt across eps) and ``<prefix>_by_eps.csv`` (one series per eps across dt).

    Timings are written as ``nan`` unless ``include_timing`` is set, which keeps the
    output byte-identical across reruns.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    main = out / f"{prefix}.csv"
    with open(main, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in records:
            w.writerow([r.problem, r.scheme, r.n, _fmt(r.eps), _fmt(r.dt), _fmt(r.error),
                        _fmt(r.runtime_s if include_timing else float("nan")), ";".join(r.flags)])
    eps_vals = sorted({r.eps for r in records})
    dt_vals = sorted({r.dt for r in records})
    table = {(r.eps, r.dt): r.error for r in records}
    paths = [main]
    for name, rows, cols, row_label, lookup in (
        ("by_dt", eps_vals, dt_vals, "eps", lambda row, col: table.get((row, col))),
        ("by_eps", dt_vals, eps_vals, "dt", lambda row, col: table.get((col, row))),
    ):
        path = out / f"{prefix}_{name}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            series = "dt" if name == "by_dt" else "eps"
            w.writerow([row_label] + [f"{series}={_fmt(c)}" for c in cols])
            for row in rows:
                w.writerow([_fmt(row)] + [("" if lookup(row, c) is None else _fmt(lookup(row, c))) for c in cols])
        paths.append(path)
    return paths


def read_records(path):
    """Parse a CSV written by :func:`emit`."""
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(ErrorRecord(
                problem=row["problem"], scheme=row["scheme"], n=int(row["n"]), eps=float(row["eps"]),
                dt=float(row["dt"]), error=float(row["error"]), runtime_s=float(row["runtime_s"]),
                flags=tuple(f for f in row["flags"].split(";") if f),
            ))
    return out
