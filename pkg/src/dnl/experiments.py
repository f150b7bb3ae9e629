"""Density sweeps, f_lambda decay and the bundled experiment suite.

All artifacts are written without timings or host data, with floats in
``repr`` form, so a rerun with the same config is byte-identical.
"""

from __future__ import annotations

import csv
import hashlib
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audit import run_full_audit
from .config import build_domain, build_phi, config_hash, merged
from .domain import DiscreteDomain, norm
from .energy import Energy, energy_from_config
from .errors import ConfigError, NumericalError
from .nonlinearity import Nonlinearity
from .report import dumps
from .resolvent import ResolventProblem, key_inequality_margin, pointwise_product_flambda, solve
from .semigroup import evolve

DEFAULT_LAMBDAS = tuple(2.0**-k for k in range(13))
MONOTONE_SLACK = 1e-8
PROFILES = ("bump", "step", "sawtooth")


def _unit_coordinate(dom: DiscreteDomain) -> np.ndarray:
    if dom.coords is not None:
        c = dom.coords - dom.coords.min()
        span = c.max()
        return c / span if span > 0 else c
    n = dom.node_count
    return np.arange(n) / max(n - 1, 1)


def profile(dom: DiscreteDomain, name: str) -> np.ndarray:
    """Default test data on ``x`` rescaled to [0, 1].

    ``bump`` is a Gaussian bump, ``step`` the indicator of [1/4, 3/4) and
    ``sawtooth`` a sign-changing three-tooth ramp in [-1, 1).
    """
    x = _unit_coordinate(dom)
    if name == "bump":
        f = np.exp(-(((x - 0.5) / 0.15) ** 2))
    elif name == "step":
        f = ((x >= 0.25) & (x < 0.75)).astype(float)
    elif name == "sawtooth":
        f = 2.0 * ((3.0 * x) % 1.0) - 1.0
    else:
        raise ConfigError(f"unknown profile {name!r}")
    return dom.pin(f)


def default_profiles(dom: DiscreteDomain) -> dict[str, np.ndarray]:
    return {name: profile(dom, name) for name in PROFILES}


def _check_lambdas(lam_list) -> list[float]:
    lams = [float(x) for x in lam_list]
    if not lams:
        raise ConfigError("lambda list is empty")
    if any(not lam > 0 for lam in lams):
        raise ConfigError("lambdas must be positive")
    if any(b >= a for a, b in zip(lams, lams[1:])):
        raise ConfigError("lambda list must be strictly decreasing")
    return lams


@dataclass
class Table:
    columns: tuple
    rows: list = field(default_factory=list)
    flags: dict = field(default_factory=dict)

    def column(self, name) -> np.ndarray:
        return np.array([r[name] for r in self.rows], dtype=float)

    def to_csv(self) -> str:
        return rows_to_csv(self.columns, self.rows)


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def rows_to_csv(columns, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for r in rows:
        writer.writerow([_fmt(r[c]) for c in columns])
    return buf.getvalue()


def read_csv(text: str) -> list[dict]:
    """Parse a table written by :func:`rows_to_csv`; numeric cells become floats."""
    out = []
    for row in csv.DictReader(io.StringIO(text)):
        parsed = {}
        for k, v in row.items():
            try:
                parsed[k] = float(v)
            except ValueError:
                parsed[k] = v
        out.append(parsed)
    return out


def _sweep(E, phi, f, lams, nu, tol):
    dom = E.domain
    out, u0 = [], None
    for lam in lams:
        prob = ResolventProblem(E, phi, lam, nu, f)
        try:
            sol = solve(prob, tol=tol, u0=u0)
        except NumericalError as exc:
            out.append((lam, None, prob, f"failed: {type(exc).__name__}"))
            continue
        u0 = sol.u
        out.append((lam, sol, prob, "ok"))
    return dom, out


DENSITY_COLUMNS = ("lambda", "l1_error", "linf_error", "linf_u", "key_margin", "iterations",
                   "l1_error_nu0", "monotone_violation", "status")


def density_sweep(E: Energy, phi: Nonlinearity, f, lam_list=DEFAULT_LAMBDAS, nu: float = 1e-3,
                  tol: float = 1e-10) -> Table:
    """``||u_lam - f||`` along a decreasing lambda list, warm-started.

    The ``l1_error_nu0`` column repeats the sweep with ``nu = 0``. Rows
    where the L1 error grows by more than ``1e-8`` over the previous row
    are flagged in ``monotone_violation``; ``flags["monotone"]`` is the
    conjunction over the sweep.
    """
    lams = _check_lambdas(lam_list)
    f = E.domain.pin(f)
    dom, main = _sweep(E, phi, f, lams, nu, tol)
    _, ref = _sweep(E, phi, f, lams, 0.0, tol)
    table = Table(DENSITY_COLUMNS)
    prev = math.inf
    for (lam, sol, prob, status), (_, sol0, _, _) in zip(main, ref):
        if sol is None:
            row = dict.fromkeys(DENSITY_COLUMNS, math.nan)
            row.update({"lambda": lam, "iterations": -1, "monotone_violation": False, "status": status})
        else:
            err = sol.u - f
            l1 = norm(dom, err, "L1")
            row = {
                "lambda": lam,
                "l1_error": l1,
                "linf_error": norm(dom, err, "Linf"),
                "linf_u": norm(dom, sol.u, "Linf"),
                "key_margin": key_inequality_margin(prob, sol),
                "iterations": sol.iterations,
                "monotone_violation": bool(l1 > prev + MONOTONE_SLACK),
                "status": status,
            }
            prev = l1
        row["l1_error_nu0"] = norm(dom, sol0.u - f, "L1") if sol0 is not None else math.nan
        table.rows.append(row)
    table.flags = {
        "monotone": not any(r["monotone_violation"] for r in table.rows),
        "failed_rows": sum(r["status"] != "ok" for r in table.rows),
        "f_l1": norm(dom, f, "L1"),
        "nu": float(nu),
    }
    return table


FLAMBDA_COLUMNS = ("lambda", "flambda_l1", "min_entry", "status")


def flambda_convergence(E: Energy, phi: Nonlinearity, f, lam_list=DEFAULT_LAMBDAS, nu: float = 0.0,
                        tol: float = 1e-10) -> Table:
    """``||f_lam||_1`` for ``f_lam = (f - u_lam)(phi(f) - phi(u_lam))``.

    ``flags`` records strict decrease and the final-to-initial ratio.
    """
    lams = _check_lambdas(lam_list)
    f = E.domain.pin(f)
    dom, main = _sweep(E, phi, f, lams, nu, tol)
    table = Table(FLAMBDA_COLUMNS)
    for lam, sol, _, status in main:
        if sol is None:
            table.rows.append({"lambda": lam, "flambda_l1": math.nan, "min_entry": math.nan, "status": status})
            continue
        fl = pointwise_product_flambda(f, sol, phi)
        table.rows.append({"lambda": lam, "flambda_l1": norm(dom, fl, "L1"),
                           "min_entry": float(np.min(fl)), "status": status})
    vals = table.column("flambda_l1")
    first = vals[0]
    table.flags = {
        "strictly_decreasing": bool(np.all(np.diff(vals) < 0)),
        "ratio": float(vals[-1] / first) if first > 0 else 0.0,
    }
    table.flags["below_1e-6"] = bool(table.flags["ratio"] < 1e-6)
    return table


DEFAULT_SUITE_CONFIG = {
    "seed": 42,
    "domain": {"grid1d": {"n": 64, "h": 1.0}},
    "p_values": [1.5, 2.0, 3.0],
    "m_values": [0.5, 1.0, 2.0, 3.0],
    "profiles": list(PROFILES),
    "lambda_list": list(DEFAULT_LAMBDAS),
    "nu": 1e-3,
    "tol": 1e-10,
    "audit": {},
    "evolution": {"p": 3.0, "m": 2.0, "profile": "bump", "t_final": 1.0, "n_steps": 64},
}


def _sha256(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def run_experiment_suite(config: dict | None = None, out_dir=None) -> dict:
    """Density sweeps over the (p, m, profile) matrix, the audit and one evolution.

    Writes ``density.csv``, ``flambda.csv``, ``audit.json``,
    ``evolution.csv``, ``summary.json`` and ``manifest.json`` to
    ``out_dir`` (when given) and returns the manifest. An experiment that
    raises is recorded in the manifest's ``failures`` and the rest still run.
    """
    cfg = merged(DEFAULT_SUITE_CONFIG, config)
    lams = _check_lambdas(cfg["lambda_list"])
    seed = int(cfg["seed"])
    tol = float(cfg["tol"])
    dom = build_domain(cfg["domain"])
    profiles = {name: profile(dom, name) for name in cfg["profiles"]}
    failures = []
    files = {}

    density_rows, flambda_rows, cells = [], [], []
    for p in cfg["p_values"]:
        E = energy_from_config({"kind": "p_dirichlet", "p": float(p)}, dom)
        for m in cfg["m_values"]:
            phi = build_phi({"kind": "power", "m": float(m)})
            for name, f in profiles.items():
                tag = {"p": float(p), "m": float(m), "profile": name}
                try:
                    dt = density_sweep(E, phi, f, lams, float(cfg["nu"]), tol)
                    ft = flambda_convergence(E, phi, f, lams, 0.0, tol)
                except Exception as exc:  # isolate the cell
                    failures.append({**tag, "experiment": "density", "error": f"{type(exc).__name__}: {exc}"})
                    continue
                density_rows += [{**tag, **r} for r in dt.rows]
                flambda_rows += [{**tag, **r} for r in ft.rows]
                last = dt.rows[-1]
                cells.append({**tag, "monotone": dt.flags["monotone"], "failed_rows": dt.flags["failed_rows"],
                              "final_l1_error": last["l1_error"], "f_l1": dt.flags["f_l1"],
                              "final_relative_error": last["l1_error"] / dt.flags["f_l1"],
                              "flambda_ratio": ft.flags["ratio"],
                              "flambda_strictly_decreasing": ft.flags["strictly_decreasing"],
                              "flambda_below_1e-6": ft.flags["below_1e-6"]})
    tag_cols = ("p", "m", "profile")
    artifacts = {
        "density.csv": rows_to_csv(tag_cols + DENSITY_COLUMNS, density_rows),
        "flambda.csv": rows_to_csv(tag_cols + FLAMBDA_COLUMNS, flambda_rows),
    }

    audit_cfg = merged({"seed": seed}, cfg["audit"])
    try:
        report = run_full_audit(audit_cfg)
        artifacts["audit.json"] = report.to_json()
        audit_passed = report.passed
    except Exception as exc:
        failures.append({"experiment": "audit", "error": f"{type(exc).__name__}: {exc}"})
        audit_passed = False

    ev = cfg["evolution"]
    try:
        E = energy_from_config({"kind": "p_dirichlet", "p": float(ev["p"])}, dom)
        phi = build_phi({"kind": "power", "m": float(ev["m"])})
        run = evolve(E, phi, profile(dom, ev["profile"]), float(ev["t_final"]), int(ev["n_steps"]), tol=tol)
        artifacts["evolution.csv"] = run.to_csv(dom)
        linf = [norm(dom, u, "Linf") for u in run.trajectory]
        evolution = {"linf_nonincreasing": bool(np.all(np.diff(linf) <= 1e-10)), "final_linf": linf[-1]}
    except Exception as exc:
        failures.append({"experiment": "evolution", "error": f"{type(exc).__name__}: {exc}"})
        evolution = None

    summary = {
        "density_cells": cells,
        "all_monotone": all(c["monotone"] for c in cells),
        "audit_passed": audit_passed,
        "evolution": evolution,
    }
    artifacts["summary.json"] = dumps(summary)

    for name, text in artifacts.items():
        files[name] = _sha256(text)
    manifest = {
        "config": cfg,
        "config_hash": config_hash(cfg),
        "seed": seed,
        "files": files,
        "failures": failures,
        "passed": not failures and audit_passed and summary["all_monotone"],
    }
    artifacts["manifest.json"] = dumps(manifest)

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for name, text in artifacts.items():
            (out / name).write_text(text)
    return manifest
