"""Command-line front end: ``zenodyn lz``, ``zenodyn strobe`` and ``zenodyn check``.

Exit codes: 0 on success, 1 on a numerical failure (or a failed check),
2 on invalid flags or configuration. Setting ``ZENODYN_OUTPUT_DIR`` places
relative output paths under that directory.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from .channels import DephasingChannel
from .checks import MAX_CHECK_DIM, run_battery
from .config import ConfigError, ScenarioConfig
from .effective import halving_ratios, stroboscopic_comparison
from .landau_zener import (
    KINDS,
    WINDOW_TOL,
    LZParams,
    default_window,
    lz_closed_form,
    lz_effective_ode,
    lz_exact,
    lz_formula,
    make_schedule,
)
from .operators import ValidationError
from .propagation import DEFAULT_TOL, NonConvergenceError

OUTPUT_DIR_ENV = "ZENODYN_OUTPUT_DIR"
POPULATION_SUM_TOL = 1e-8
NUMERIC_ERRORS = (NonConvergenceError, ValidationError, ArithmeticError, np.linalg.LinAlgError)


class UsageError(Exception):
    pass


def fmt(x):
    """Number with 17 significant digits."""
    return format(float(x), ".17g")


def output_path(path):
    root = os.environ.get(OUTPUT_DIR_ENV)
    if root and not os.path.isabs(path):
        path = os.path.join(root, path)
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    return path


def write_csv(path, dim, rows):
    """Rows are ``(t, scheme, populations, offdiag_norm)`` tuples."""
    with open(output_path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "scheme"] + [f"p{k}" for k in range(dim)] + ["offdiag_norm"])
        for t, scheme, pops, off in rows:
            pops = np.asarray(pops, dtype=float)
            if abs(pops.sum() - 1) > POPULATION_SUM_TOL:
                raise ValidationError(f"populations at t={t!r} ({scheme}) sum to {pops.sum()!r}")
            w.writerow([fmt(t), scheme] + [fmt(p) for p in pops] + [fmt(off)])


def write_json(path, payload):
    with open(output_path(path), "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"cannot serialize {type(x).__name__}")


def _finite_or_none(x):
    return None if x is None or not math.isfinite(x) else x


def _map(fn, items, jobs):
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


# -- lz -----------------------------------------------------------------------

def lz_point(task):
    """One (kind, N) sweep point: returns the summary and the CSV rows."""
    delta, eps, kind, N, mode, tol, window_tol, tails, grid_points = task
    p = LZParams(delta, eps)
    sched = make_schedule(p, kind, N)
    summary = {"kind": kind, "N": N, "measurements": len(sched),
               "schedule_times": list(sched.times), "lz_formula": lz_formula(p)}
    rows = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        if mode in ("exact", "all"):
            T0 = default_window(p, sched)
            grid = np.linspace(-T0, T0, grid_points) if grid_points else ()
            ex = lz_exact(p, sched, tol=tol, window_tol=window_tol, grid=grid)
            traj = ex.trajectory
            pops = traj.populations()
            offs = traj.offdiag_norms()
            for t, kd, pp, off in zip(traj.times, traj.kinds, pops, offs):
                rows.append((t, "exact", pp, off))
            summary.update(exact=ex.terminal_rho11, exact_p0_computational=ex.terminal_p0,
                           truncation_T=ex.T, window_history=ex.window_history,
                           integrator={k: traj.meta.get(k) for k in
                                       ("accepted_steps", "rejected_steps", "min_step", "max_step")})
        if mode in ("effective", "all") and kind != "none":
            eff = lz_effective_ode(p, sched, tol=tol, tails=tails)
            for t, r in zip(eff.times, eff.rho11):
                rows.append((t, "effective", [1 - r, r], 0.0))
            summary.update(effective=eff.terminal, validity_ratio=eff.max_validity_ratio, tails=tails)
        if mode in ("closed", "all") and kind != "none":
            c = lz_closed_form(p, kind, N)
            rows.append((math.inf, "closed-form", [1 - c, c], 0.0))
            summary["closed_form"] = c
    summary["warnings"] = [str(w.message) for w in caught]
    vals = {k: summary[k] for k in ("exact", "effective", "closed_form") if k in summary}
    names = list(vals)
    summary["deviations"] = {f"{a}-{b}": vals[a] - vals[b]
                             for i, a in enumerate(names) for b in names[i + 1:]}
    summary["N_times_rho11"] = {k: (N * v if N else None) for k, v in vals.items()}
    return summary, rows


def cmd_lz(args):
    if args.delta <= 0 or args.eps <= 0:
        raise UsageError("--delta and --eps must be positive")
    Ns = [0] if args.kind == "none" else args.N
    if args.kind != "none" and (not Ns or any(n < 1 for n in Ns)):
        raise UsageError("--N must list positive integers for measured schedules")
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    tasks = [(args.delta, args.eps, args.kind, n, args.mode, args.tol, args.window_tol,
              args.tails, args.grid) for n in Ns]
    results = _map(lz_point, tasks, args.jobs)
    for (summary, rows), n in zip(results, Ns):
        path = f"{args.out}.csv" if len(Ns) == 1 else f"{args.out}_N{n}.csv"
        write_csv(path, 2, rows)
        summary["csv"] = path
    payload = {
        "command": "lz", "version": __version__,
        "parameters": {"delta": args.delta, "eps": args.eps, "kind": args.kind, "N": Ns,
                       "mode": args.mode, "tails": args.tails, "grid": args.grid,
                       "regime_eps_over_delta2": args.eps / args.delta ** 2},
        "tolerances": {"tol": args.tol, "window_tol": args.window_tol},
        "points": [s for s, _ in results],
    }
    write_json(f"{args.out}.json", payload)
    for s in payload["points"]:
        vals = "  ".join(f"{k}={s[k]:.6g}" for k in ("exact", "effective", "closed_form") if k in s)
        print(f"kind={s['kind']} N={s['N']}  {vals}")
    return 0


# -- strobe -------------------------------------------------------------------

def _strobe_task(task):
    cfg_dict, tau, horizon, scaling, g, tol = task
    cfg = ScenarioConfig.from_dict(cfg_dict)
    basis = cfg.basis_at(cfg.t_start)
    p0 = basis.populations(cfg.initial_density())
    return stroboscopic_comparison(cfg.generator(), basis, [tau], horizon, p0, scaling, g, tol)[0]


def resolve_scaling(cfg, scaling):
    if scaling != "auto":
        return scaling
    G = cfg.generator()(cfg.t_start)
    lam = DephasingChannel(cfg.basis_at(cfg.t_start)).superop
    return "fixed-g" if np.max(np.abs(lam @ G @ lam)) < 1e-12 else "fixed-gamma"


def cmd_strobe(args):
    try:
        cfg = ScenarioConfig.load(args.config)
    except OSError as exc:
        raise UsageError(f"cannot read {args.config}: {exc}") from None
    except ConfigError as exc:
        raise UsageError(f"{args.config}: {exc}") from None
    if cfg.lz is not None:
        raise UsageError("strobe needs a constant generator")
    if not args.tau or any(t <= 0 for t in args.tau):
        raise UsageError("--tau values must be positive")
    if args.horizon <= 0 or args.g <= 0 or args.jobs < 1:
        raise UsageError("--horizon, --g and --jobs must be positive")
    scaling = resolve_scaling(cfg, args.scaling)
    tol = args.tol if args.tol is not None else cfg.tol
    tasks = [(cfg.to_dict(), tau, args.horizon, scaling, args.g, tol) for tau in args.tau]
    runs = _map(_strobe_task, tasks, args.jobs)
    out = args.out or cfg.output.get("csv", "strobe").removesuffix(".csv")
    files = []
    for i, run in enumerate(runs):
        rows = []
        for t, pe, pp, off in zip(run.times, run.exact, run.pauli, run.offdiag):
            rows.append((t, "exact", pe, off))
            rows.append((t, "effective", pp, 0.0))
        path = f"{out}_tau{i}.csv"
        write_csv(path, cfg.dim, rows)
        files.append(path)
    devs = [r.max_deviation for r in runs]
    ratios = halving_ratios(devs) if len(runs) > 1 else None
    payload = {
        "command": "strobe", "version": __version__, "config": cfg.to_dict(),
        "parameters": {"tau": list(args.tau), "horizon": args.horizon, "scaling": scaling, "g": args.g},
        "tolerances": {"tol": tol},
        "runs": [{"tau": r.tau, "gamma": r.gamma, "measurements": len(r.times),
                  "max_deviation": r.max_deviation, "integrator_steps": r.steps, "csv": f}
                 for r, f in zip(runs, files)],
        "max_deviations": devs,
        "halving_ratios": None if ratios is None else [_finite_or_none(x) for x in ratios],
    }
    write_json(f"{out}.json", payload)
    for r in runs:
        print(f"tau={r.tau:.6g} gamma={r.gamma:.6g} max_deviation={r.max_deviation:.6g}")
    if ratios is not None:
        print("halving ratios: " + ", ".join(f"{x:.4g}" for x in ratios))
    return 0


# -- check --------------------------------------------------------------------

def cmd_check(args):
    if not 1 <= args.dim <= MAX_CHECK_DIM:
        raise UsageError(f"--dim must be in [1, {MAX_CHECK_DIM}]")
    if args.trials < 1:
        raise UsageError("--trials must be >= 1")
    results = run_battery(seed=args.seed, max_dim=args.dim, trials=args.trials)
    for r in results:
        print(r.row())
    failed = [r.name for r in results if not r.passed]
    if failed:
        print("failed invariants: " + ", ".join(failed), file=sys.stderr)
        return 1
    print(f"all {len(results)} invariants passed (seed={args.seed}, dim<={args.dim})")
    return 0


# -- entry point ---------------------------------------------------------------

def build_parser():
    ap = argparse.ArgumentParser(prog="zenodyn", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    lz = sub.add_parser("lz", help="Landau-Zener sweep under repeated measurements")
    lz.add_argument("--delta", type=float, default=1.0)
    lz.add_argument("--eps", type=float, default=10.0)
    lz.add_argument("--kind", choices=KINDS, default="uniform")
    lz.add_argument("--N", type=int, nargs="+", default=[16])
    lz.add_argument("--mode", choices=("exact", "effective", "closed", "all"), default="all")
    lz.add_argument("--tails", choices=("frozen", "extend"), default="frozen")
    lz.add_argument("--tol", type=float, default=DEFAULT_TOL)
    lz.add_argument("--window-tol", type=float, default=WINDOW_TOL)
    lz.add_argument("--grid", type=int, default=0, help="extra exact trajectory samples")
    lz.add_argument("--jobs", type=int, default=1)
    lz.add_argument("--out", default="lz", help="output prefix for .csv and .json")
    lz.set_defaults(func=cmd_lz)

    st = sub.add_parser("strobe", help="stroboscopic-limit convergence study")
    st.add_argument("--config", required=True)
    st.add_argument("--tau", type=float, nargs="+", default=[0.2, 0.1, 0.05, 0.025])
    st.add_argument("--horizon", type=float, default=2.0)
    st.add_argument("--scaling", choices=("auto", "fixed-g", "fixed-gamma"), default="auto")
    st.add_argument("--g", type=float, default=1.0, help="gamma^2 tau for fixed-g scaling")
    st.add_argument("--tol", type=float, default=None)
    st.add_argument("--jobs", type=int, default=1)
    st.add_argument("--out", default=None)
    st.set_defaults(func=cmd_strobe)

    ck = sub.add_parser("check", help="run the invariant battery")
    ck.add_argument("--seed", type=int, default=0)
    ck.add_argument("--dim", type=int, default=4)
    ck.add_argument("--trials", type=int, default=10)
    ck.set_defaults(func=cmd_check)
    return ap


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.exit(2, f"zenodyn {args.command}: error: {exc}\n")
    except (ConfigError, *NUMERIC_ERRORS) as exc:
        print(f"zenodyn {args.command}: numerical failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
