"""Command-line entry point: ``sharpflat {decompose,solve,sweep,verify,fit}``."""
from __future__ import annotations

import argparse
import sys
import warnings

import numpy as np

from . import harness
from .algebra import opnorm
from .averaging import iterate, lambda_op, verify_bounds
from .errors import InsufficientDataError
from .integrators import Scheme, solve_direct, solve_micro_macro
from .models import PRESET_NAMES, load_config


def _problem(args):
    if getattr(args, "config", None):
        return harness.build_problem(load_config(args.config), args.problem or "custom")
    return harness.get_problem(args.problem)


def cmd_decompose(args):
    problem = _problem(args)
    dec = iterate(problem.field, args.order, args.c)
    dec.save(args.out)
    print(f"order {args.order} decomposition of {problem.name}: eps_n={dec.eps_n:.6g} -> {args.out}")
    return 0


def cmd_solve(args):
    problem = _problem(args)
    fast = problem.fast_eps(args.eps)
    L = args.steps if args.steps else int(round(problem.T / args.dt))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore" if args.quiet else "default", RuntimeWarning)
        if args.mode == "direct":
            traj = solve_direct(problem.field, problem.u0, problem.T, L, fast, args.scheme)
        else:
            dec = iterate(problem.field, args.order, args.c)
            traj = solve_micro_macro(dec, problem.field, problem.u0, problem.T, L, fast, args.scheme,
                                     drop_w=args.mode == "macro_only")
    if args.out:
        traj.to_csv(args.out)
    final = ", ".join(f"{x.real:.10g}" for x in traj.u[-1])
    print(f"{problem.name} {args.mode} {args.scheme} eps={args.eps:g} L={L}: u(T) = [{final}]")
    if problem.has_exact:
        err = harness.compute_error(traj, lambda t: problem.exact(args.eps, t))
        print(f"max error vs exact solution: {err:.6e}")
    return 0


def cmd_sweep(args):
    cfg = harness.SweepConfig.load(args.config)
    if args.workers:
        cfg.workers = args.workers
    problem = cfg.load_problem()
    refs = (harness.ReferenceCache(problem, cfg.dt_ref, cfg.steps)
            if cfg.reference == "fine_EEint" else None)
    records = harness.run_sweep(cfg, refs)
    paths = harness.emit(records, args.out, args.prefix, include_timing=args.timing)
    floor = harness.noise_floor(cfg, refs)
    print(f"noise floor for fits: {floor:.3g} (points below {10 * floor:.3g} dropped)")
    for eps, recs in sorted(harness.group_by(records, "eps").items()):
        try:
            fit = harness.fit_order(recs, floor)
            print(f"eps={eps:.4g}: slope {fit.slope:.3f} ({fit.points} points)")
        except InsufficientDataError as exc:
            print(f"eps={eps:.4g}: no fit ({exc})")
    print("wrote " + ", ".join(str(p) for p in paths))
    return 0


def _invariants(problem, dec, eps):
    """Structural identities of a decomposition; returns ``(name, value, ok)`` rows."""
    a = problem.field.a
    rows = []
    eye = np.eye(a.dim)
    closure = 0.0
    for phi in dec.phis:
        avg = phi.average()
        closure = max(closure, opnorm(avg[0] - eye), *(opnorm(avg[j]) for j in range(1, len(avg))))
    rows.append(("closure <Phi^(k)> = id", closure, closure <= 1e-12))
    tele = (dec.delta.zero_mean_primitive().shift(1) - (dec.phis[dec.n] - dec.phis[dec.n + 1]))
    tele_err = max(c.sup_bound() for c in tele.coeffs)
    rows.append(("eps zmp(delta) = Phi^(n) - Phi^(n+1)", tele_err, tele_err <= 1e-12))
    phi, A, delta = dec.at(eps)
    resid = (phi.derivative() * (1 / eps) - (a @ phi - phi @ A)) - delta
    scale = max(1.0, delta.sup_bound(), phi.derivative().sup_bound() / eps)
    rows.append(("homological residual equals delta", resid.sup_bound() / scale,
                 resid.sup_bound() <= 1e-10 * scale))
    mean_delta = float(opnorm(dec.delta.average().at(eps)))
    rows.append(("<delta> = 0", mean_delta, mean_delta <= 1e-12))
    lam = lambda_op(dec.phis[dec.n], a)
    mean_lam = max(opnorm(lam.average()[j]) for j in range(len(lam)))
    rows.append(("<Lambda{Phi^(n)}> = 0", mean_lam, mean_lam <= 1e-12))
    if problem.is_bloch:
        col = float(np.abs(a.coef.sum(axis=1)).max())
        rows.append(("rate matrix column sums vanish", col, col <= 1e-14))
    return rows


def cmd_verify(args):
    names = args.problem or ["toy-1F", "toy-1F-flat", "toy-3F", "toy-3F-flat", "bloch-1F", "bloch-3F"]
    orders = args.order or [1, 2]
    ok = True
    for name in names:
        problem = harness.get_problem(name)
        for n in orders:
            dec = iterate(problem.field, n, args.c)
            eps = args.fraction * dec.eps_n
            report = verify_bounds(dec, problem.field, eps, q=args.q)
            print(f"[{name} n={n}] " + report.summary())
            print(f"  measured c^(q)={report.measured_c_q:.4g}  C_delta={report.derivative_constant:.4g}")
            ok &= report.passed
            if not args.bounds_only:
                for label, value, passed in _invariants(problem, dec, eps):
                    print(f"  {'PASS' if passed else 'FAIL'} {label}: {value:.3e}")
                    ok &= passed
    print("ALL CHECKS PASSED" if ok else "SOME CHECKS FAILED")
    return 0 if ok else 1


def cmd_fit(args):
    records = harness.read_records(args.csv)
    if args.scheme:
        records = [r for r in records if r.scheme == args.scheme]
    groups = harness.group_by(records, "eps") if args.by == "eps" else {"all": records}
    ok = True
    for key, recs in sorted(groups.items(), key=lambda kv: str(kv[0])):
        label = f"eps={key:.4g}" if args.by == "eps" else "all"
        if args.min_dt is not None:
            recs = [r for r in recs if r.dt >= args.min_dt]
        try:
            fit = harness.fit_order(recs, args.floor)
        except InsufficientDataError as exc:
            print(f"{label}: FAIL ({exc})")
            ok = False
            continue
        line = f"{label}: slope {fit.slope:.4f} intercept {fit.intercept:.4f} ({fit.points} points)"
        if args.expect is not None:
            passed = abs(fit.slope - args.expect) <= args.tol
            ok &= passed
            line += f" {'PASS' if passed else 'FAIL'} (expected {args.expect} +- {args.tol})"
        print(line)
    return 0 if ok else 1


def build_parser():
    parser = argparse.ArgumentParser(prog="sharpflat", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def problem_args(p, multiple=False):
        if multiple:
            p.add_argument("--problem", action="append", choices=PRESET_NAMES)
        else:
            p.add_argument("--problem", default="toy-3F", help=f"preset name ({', '.join(PRESET_NAMES)})")
            p.add_argument("--config", help="JSON problem configuration (overrides the preset)")

    p = sub.add_parser("decompose", help="build and serialize a micro-macro decomposition")
    problem_args(p)
    p.add_argument("--order", type=int, default=1)
    p.add_argument("--c", type=float, default=0.5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("solve", help="compute one trajectory")
    problem_args(p)
    p.add_argument("--order", type=int, default=1)
    p.add_argument("--c", type=float, default=0.5)
    p.add_argument("--scheme", default="RK2", choices=[s.value for s in Scheme])
    p.add_argument("--eps", type=float, required=True)
    step = p.add_mutually_exclusive_group(required=True)
    step.add_argument("--dt", type=float)
    step.add_argument("--steps", type=int)
    p.add_argument("--mode", default="micro_macro", choices=harness.MODES)
    p.add_argument("--out", help="trajectory CSV path")
    p.add_argument("--quiet", action="store_true", help="silence eps > eps_n warnings")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="run a (dt, eps) error study from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=".")
    p.add_argument("--prefix", default="sweep")
    p.add_argument("--workers", type=int)
    p.add_argument("--timing", action="store_true", help="record wall times (output no longer byte-stable)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify", help="check the decomposition bounds and structural identities")
    problem_args(p, multiple=True)
    p.add_argument("--order", type=int, action="append")
    p.add_argument("--c", type=float, default=0.5)
    p.add_argument("--q", type=int, default=3)
    p.add_argument("--fraction", type=float, default=0.5, help="eps as a fraction of eps_n")
    p.add_argument("--bounds-only", action="store_true")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("fit", help="fit convergence orders on a sweep CSV")
    p.add_argument("csv")
    p.add_argument("--by", choices=["eps", "all"], default="eps")
    p.add_argument("--scheme")
    p.add_argument("--floor", type=float, default=0.0, help="reference accuracy; points below 10x are dropped")
    p.add_argument("--min-dt", type=float)
    p.add_argument("--expect", type=float, help="expected slope")
    p.add_argument("--tol", type=float, default=0.2)
    p.set_defaults(func=cmd_fit)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
