"""Command line entry point ``dnl``.

Exit status: 0 on success, 1 when a check fails or a solve does not
converge, 2 for usage and configuration errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import audit, experiments
from .config import build_model, load_config
from .errors import ConfigError, DimensionError, NumericalError
from .report import dumps
from .resolvent import ResolventProblem, solve
from .semigroup import evolve


def _read_vector(path, key):
    data = json.loads(Path(path).read_text())
    if isinstance(data, dict):
        if key not in data:
            raise ConfigError(f"{path}: expected a list or an object with key {key!r}")
        data = data[key]
    return np.asarray(data, dtype=float)


def _write(text: str, out):
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _config(args) -> dict:
    cfg = load_config(args.config) if args.config else {}
    if getattr(args, "grid1d", None) is not None:
        n = args.grid1d
        cfg["domain"] = {"grid1d": {"n": n, "h": args.h if args.h is not None else 1.0 / (n + 1)}}
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = args.seed
    return cfg


def _initial_data(path, dom, key):
    if path is None:
        return experiments.profile(dom, "bump")
    v = _read_vector(path, key)
    if v.shape != (dom.node_count,):
        raise DimensionError(f"{path}: expected {dom.node_count} values, got {v.size}")
    return v


def cmd_solve(args) -> int:
    cfg = _config(args)
    dom, E, phi = build_model(cfg)
    f = _initial_data(args.f, dom, "f")
    tol = args.tol if args.tol is not None else float(cfg.get("tol", 1e-10))
    sol = solve(ResolventProblem(E, phi, args.lam, args.nu, f), tol=tol)
    _write(dumps({"u": sol.u, "w": sol.w, "residual": sol.kkt_residual, "u_residual": sol.u_residual,
                  "iterations": sol.iterations, "objective": sol.objective_value,
                  "lambda": args.lam, "nu": args.nu}), args.out)
    return 0


def cmd_audit(args) -> int:
    cfg = _config(args)
    if args.tol is not None:
        cfg["tolerance"] = args.tol
    report = audit.run_full_audit(cfg)
    _write(report.to_json(), args.out)
    print(report.summary(), file=sys.stderr)
    return 0 if report.passed else 1


def cmd_evolve(args) -> int:
    cfg = _config(args)
    dom, E, phi = build_model(cfg)
    u0 = _initial_data(args.u0, dom, "u0")
    tol = args.tol if args.tol is not None else float(cfg.get("tol", 1e-10))
    run = evolve(E, phi, u0, args.t, args.steps, tol=tol)
    _write(dumps(run.to_dict(dom)), args.out)
    if args.csv:
        Path(args.csv).write_text(run.to_csv(dom))
    return 0


def cmd_sweep(args) -> int:
    cfg = _config(args)
    dom, E, phi = build_model(cfg)
    lams = cfg.get("lambda_list", experiments.DEFAULT_LAMBDAS)
    nu = args.nu if args.nu is not None else float(cfg.get("nu", 1e-3))
    tol = args.tol if args.tol is not None else float(cfg.get("tol", 1e-10))
    names = cfg.get("profiles", list(experiments.PROFILES))
    rows, ok = [], True
    for name in names:
        table = experiments.density_sweep(E, phi, experiments.profile(dom, name), lams, nu, tol)
        rows += [{"profile": name, **r} for r in table.rows]
        ok = ok and table.flags["monotone"] and table.flags["failed_rows"] == 0
    text = experiments.rows_to_csv(("profile",) + experiments.DENSITY_COLUMNS, rows)
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "sweep.csv").write_text(text)
    else:
        sys.stdout.write(text)
    return 0 if ok else 1


def cmd_suite(args) -> int:
    cfg = _config(args)
    if args.tol is not None:
        cfg["tol"] = args.tol
    manifest = experiments.run_experiment_suite(cfg, args.out_dir)
    if args.out_dir is None:
        sys.stdout.write(dumps(manifest))
    return 0 if manifest["passed"] else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dnl", description="Doubly nonlinear resolvents, audits and experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=False, out_dir=False):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--tol", type=float, help="solver or audit tolerance")
        p.add_argument("--grid1d", type=int, metavar="N", help="use a 1D grid with N interior nodes")
        p.add_argument("--h", type=float, help="grid spacing for --grid1d (default 1/(N+1))")
        if seed:
            p.add_argument("--seed", type=int)
        if out_dir:
            p.add_argument("--out-dir", dest="out_dir")

    p = sub.add_parser("solve", help="solve one resolvent problem")
    common(p)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--nu", type=float, default=0.0)
    p.add_argument("--f", help="JSON list or {\"f\": [...]} (default: bump profile)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("audit", help="run the hypothesis audit")
    common(p, seed=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("evolve", help="implicit Euler evolution")
    common(p)
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--steps", type=int, default=128)
    p.add_argument("--u0", help="JSON list or {\"u0\": [...]} (default: bump profile)")
    p.add_argument("--out")
    p.add_argument("--csv", help="also write the norm table as CSV")
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser("sweep", help="density sweep over lambda")
    common(p, out_dir=True)
    p.add_argument("--nu", type=float)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("suite", help="full experiment bundle")
    common(p, seed=True, out_dir=True)
    p.set_defaults(func=cmd_suite)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DimensionError, ValueError, OSError) as exc:
        print(f"dnl: error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"dnl: numerical failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
