"""Sampled verification of the hypotheses on (E, phi) and their consequences.

Each ``audit_*`` function returns one or more :class:`CheckResult`.
Universal statements are replaced by seeded random trials; a check passes
iff its worst margin is ``>= -tolerance`` and a failing check carries the
inputs of its worst trial as a witness.

Margins of integral inequalities are relative,
``(rhs - lhs) / max(1, |lhs|, |rhs|)``, so one tolerance serves both
tiny and large random fields.
"""

from __future__ import annotations

import math

import numpy as np

from .config import DEFAULT_DOMAIN, DEFAULT_ENERGY, DEFAULT_PHI, build_model, merged
from .domain import DiscreteDomain, negative_part, positive_part
from .energy import STRUCTURE_NOTE, Energy, check_H2star, check_structure, is_finite_energy
from .errors import ConfigError
from .nonlinearity import (Nonlinearity, gamma_eps, sample_J0, sample_P0, sign0,
                           yosida_operator)
from .report import AuditReport, CheckResult
from .resolvent import ResolventProblem, solve

DEFAULT_LAMBDAS = (1e-3, 1e-2, 1e-1, 1.0)
DEFAULT_GAMMA_EPS = (1e-1, 1e-2, 1e-3, 1e-4)
AMPLITUDE_RANGE = (1e-3, 10.0)

H2_NOTE = "the accretivity increment is read as lam * (v - v_hat)"
MARGIN_NOTE = "integral margins are relative: (rhs - lhs) / max(1, |lhs|, |rhs|)"
H4_NOTE = "in finite dimensions D(E phi) is every pinned vector; only the lattice identity can fail"

DEFAULT_AUDIT_CONFIG = {
    "domain": DEFAULT_DOMAIN,
    "energy": DEFAULT_ENERGY,
    "phi": DEFAULT_PHI,
    "seed": 42,
    "trials": 200,
    "h1_trials": 1000,
    "lambda_grid": list(DEFAULT_LAMBDAS),
    "gamma_eps": list(DEFAULT_GAMMA_EPS),
    "tolerance": 1e-8,
    "h1_tolerance": 1e-12,
    "j_count": 6,
    "t_count": 20,
    "sandwich_trials": 5,
    "nu": 0.0,
}


def random_field(rng, dom: DiscreteDomain, amplitude=None) -> np.ndarray:
    """Pinned Gaussian field; the amplitude is log-uniform unless given."""
    if amplitude is None:
        lo, hi = np.log(AMPLITUDE_RANGE[0]), np.log(AMPLITUDE_RANGE[1])
        amplitude = float(np.exp(rng.uniform(lo, hi)))
    u = amplitude * rng.standard_normal(dom.node_count)
    u[dom.boundary] = 0.0
    return u


def _rel(lhs, rhs):
    return (rhs - lhs) / max(1.0, abs(lhs), abs(rhs))


def audit_H1(E: Energy, trials: int = 1000, seed=0, tolerance: float = 1e-12) -> CheckResult:
    """``E(0) = min E``: zero subgradient at 0 and ``E(0) <= E(u)`` on samples.

    The margin of the first part is ``-||dE(0)||_inf``; of the second,
    ``E(u) - E(0)``.
    """
    dom = E.domain
    rng = np.random.default_rng(seed)
    zero = np.zeros(dom.node_count)
    g0 = E.subgradient(zero)
    e0 = E.value(zero)
    margins = [-float(np.max(np.abs(g0)))]
    witnesses = [{"u": zero, "subgradient": g0}]
    for _ in range(trials):
        u = random_field(rng, dom)
        eu = E.value(u)
        margins.append(eu - e0)
        witnesses.append({"u": u, "E(u)": eu, "E(0)": e0})
    return CheckResult.from_margins("H1", margins, witnesses, tolerance)


def audit_H2(E: Energy, pair_count: int = 200, j_family=None, lam_grid=DEFAULT_LAMBDAS,
             seed=0, tolerance: float = 1e-8) -> CheckResult:
    """Complete accretivity, ``int j(u - u^) <= int j(u - u^ + lam (v - v^))``.

    Every sampled pair is tested against every ``(j, lam)``.
    """
    dom = E.domain
    mu = dom.measure
    rng = np.random.default_rng(seed)
    if j_family is None:
        j_family = sample_J0(seed, 6)
    margins, keys, pairs = [], [], []
    for k in range(pair_count):
        u, uh = random_field(rng, dom), random_field(rng, dom)
        d = u - uh
        dv = E.subgradient(u) - E.subgradient(uh)
        pairs.append((u, uh))
        for j in j_family:
            lhs = float(np.dot(mu, j(d)))
            for lam in lam_grid:
                rhs = float(np.dot(mu, j(d + lam * dv)))
                margins.append(_rel(lhs, rhs))
                keys.append((k, j, lam, lhs, rhs))

    def witness(i):
        k, j, lam, lhs, rhs = keys[i]
        return {"u": pairs[k][0], "u_hat": pairs[k][1], "j": j.describe(), "lambda": lam,
                "lhs": lhs, "rhs": rhs}

    return CheckResult.from_margins("H2", margins, witness, tolerance, note=H2_NOTE)


def audit_H2star(E: Energy, trial_count: int = 200, P0_family=None, seed=0,
                 tolerance: float = 1e-8) -> CheckResult:
    """``E(u + T(u^ - u)) + E(u^ - T(u^ - u)) <= E(u) + E(u^)`` on samples."""
    dom = E.domain
    rng = np.random.default_rng(seed)
    if P0_family is None:
        P0_family = sample_P0(seed, 20)
    margins, wit = [], []
    for k in range(trial_count):
        u, uh = random_field(rng, dom), random_field(rng, dom)
        T = P0_family[k % len(P0_family)]
        res = check_H2star(E, u, uh, T, tolerance)
        margins.append(res.scaled_margin)
        wit.append((u, uh, T, res))

    def witness(i):
        u, uh, T, res = wit[i]
        return {"u": u, "u_hat": uh, "T": T.describe(), "lhs": res.lhs, "rhs": res.rhs}

    return CheckResult.from_margins("H2*", margins, witness, tolerance)


def audit_H3(E: Energy, phi: Nonlinearity, lam_grid=DEFAULT_LAMBDAS, trial_count: int = 200,
             seed=0, tolerance: float = 1e-8, eps_list=DEFAULT_GAMMA_EPS) -> list[CheckResult]:
    """``int v q(u) >= 0`` for ``v = dE(u)`` and ``q`` the Yosida operator of
    ``phi^{-1}``, ``sign0`` of it, and ``gamma_eps`` of it.

    Trials cycle through Gaussian fields and constant fields of random
    sign on the free nodes; odd trials pass them through ``phi`` to
    exercise the composition. Margins are
    ``int v q(u) / max(1, int |v q(u)|)``.
    """
    dom = E.domain
    mu = dom.measure
    rng = np.random.default_rng(seed)
    out = {"yosida": ([], []), "sign0": ([], []), "gamma_eps": ([], [])}
    for k in range(trial_count):
        z = random_field(rng, dom)
        if k % 4 >= 2:
            # flat fields: the diffusive part of v is small, exposing any drift term
            z = dom.pin(np.full(dom.node_count, np.sign(z[dom.free[0]]) * np.max(np.abs(z))))
        u = dom.pin(phi(z)) if k % 2 else z
        v = E.subgradient(u)
        for lam in lam_grid:
            y = yosida_operator(phi, lam, u)
            cases = [("yosida", y, {}), ("sign0", sign0(y), {})]
            cases += [("gamma_eps", gamma_eps(eps, y), {"eps": eps}) for eps in eps_list]
            for name, q, extra in cases:
                val = float(np.dot(mu, v * q))
                scale = max(1.0, float(np.dot(mu, np.abs(v * q))))
                out[name][0].append(val / scale)
                out[name][1].append(dict(u=u, v=v, **{"lambda": lam, "integral": val}, **extra))
    return [CheckResult.from_margins(f"H3/{name}", m, w, tolerance) for name, (m, w) in out.items()]


def audit_H4(E: Energy, phi: Nonlinearity, trial_count: int = 200, seed=0,
             tolerance: float = 1e-8) -> CheckResult:
    """Lattice identity ``phi(u+) = [phi(u)]+`` (and for ``u-``) plus finite energies.

    The margin is ``-max |phi(u+) - [phi(u)]+|`` over both parts, or
    ``-inf`` when an energy is not finite.
    """
    dom = E.domain
    rng = np.random.default_rng(seed)
    margins, wit = [], []
    for _ in range(trial_count):
        u = random_field(rng, dom)
        w = phi(u)
        gap = max(float(np.max(np.abs(phi(positive_part(u)) - positive_part(w)))),
                  float(np.max(np.abs(phi(negative_part(u)) - negative_part(w)))))
        finite = is_finite_energy(E, phi(positive_part(u))) and is_finite_energy(E, phi(negative_part(u)))
        margins.append(-gap if finite else -math.inf)
        wit.append({"u": u, "identity_gap": gap, "finite_energy": finite})
    return CheckResult.from_margins("H4", margins, wit, tolerance, note=H4_NOTE)


def audit_sandwich(E: Energy, phi: Nonlinearity, f_list, lam_grid=DEFAULT_LAMBDAS, nu: float = 0.0,
                   tolerance: float = 1e-8, solver_tol: float = 1e-10) -> CheckResult:
    """``u_- <= u <= u_+`` with ``u_+ >= 0 >= u_-`` for the solves at ``f, f+, f-``.

    Margins are the smallest slack over nodes, scaled by ``max(1, ||f||_inf)``.
    Solver errors propagate.
    """
    margins, wit = [], []
    for f in f_list:
        f = E.domain.pin(f)
        scale = max(1.0, float(np.max(np.abs(f))))
        for lam in lam_grid:
            sol = [solve(ResolventProblem(E, phi, lam, nu, g), tol=solver_tol).u
                   for g in (f, positive_part(f), negative_part(f))]
            u, up, um = sol
            slack = np.concatenate([u - um, up - u, up, -um])
            margins.append(float(np.min(slack)) / scale)
            wit.append({"f": f, "lambda": lam, "u": u, "u_plus": up, "u_minus": um})
    return CheckResult.from_margins("sandwich", margins, wit, tolerance)


def sign_changing_fields(rng, dom: DiscreteDomain, count: int) -> list[np.ndarray]:
    """Random fields with both signs present on the free nodes."""
    out = []
    while len(out) < count:
        f = random_field(rng, dom, amplitude=float(np.exp(rng.uniform(np.log(0.1), np.log(3.0)))))
        if np.any(f > 0) and np.any(f < 0):
            out.append(f)
    return out


_CHECK_SEEDS = {"H1": 1, "H2": 2, "H2*": 3, "H3": 4, "H4": 5, "sandwich": 6, "structure": 7}


def _seed(seed, name):
    return np.random.SeedSequence([int(seed), _CHECK_SEEDS[name]])


def run_full_audit(config: dict | None = None) -> AuditReport:
    """Run every audit on the model described by ``config``.

    Missing keys fall back to :data:`DEFAULT_AUDIT_CONFIG`. A check that
    raises is recorded as failed with the exception text; the remaining
    checks still run.
    """
    cfg = merged(DEFAULT_AUDIT_CONFIG, config)
    lam_grid = [float(x) for x in cfg["lambda_grid"]]
    if not lam_grid or any(not lam > 0 for lam in lam_grid):
        raise ConfigError("lambda_grid must be a nonempty list of positive numbers")
    dom, E, phi = build_model(cfg)
    seed = int(cfg["seed"])
    tol = float(cfg["tolerance"])
    trials = int(cfg["trials"])
    j_family = sample_J0(_seed(seed, "H2"), int(cfg["j_count"]))
    t_family = sample_P0(_seed(seed, "H2*"), int(cfg["t_count"]))
    report = AuditReport(header=[H2_NOTE, MARGIN_NOTE, H4_NOTE, STRUCTURE_NOTE])

    def guarded(names, fn, tolerance=tol):
        try:
            res = fn()
        except Exception as exc:  # recorded, not raised
            return [CheckResult.crashed(n, exc, tolerance) for n in names]
        return res if isinstance(res, list) else [res]

    h1_tol = float(cfg["h1_tolerance"])
    report.checks += guarded(["H1"], lambda: audit_H1(E, int(cfg["h1_trials"]), _seed(seed, "H1"), h1_tol), h1_tol)
    report.checks += guarded(["H2"], lambda: audit_H2(E, trials, j_family, lam_grid, _seed(seed, "H2"), tol))
    report.checks += guarded(["H2*"], lambda: audit_H2star(E, trials, t_family, _seed(seed, "H2*"), tol))
    report.checks += guarded(["H3/yosida", "H3/sign0", "H3/gamma_eps"],
                             lambda: audit_H3(E, phi, lam_grid, trials, _seed(seed, "H3"), tol,
                                              [float(e) for e in cfg["gamma_eps"]]))
    report.checks += guarded(["H4"], lambda: audit_H4(E, phi, trials, _seed(seed, "H4"), tol))

    def sandwich():
        rng = np.random.default_rng(_seed(seed, "sandwich"))
        fs = sign_changing_fields(rng, dom, int(cfg["sandwich_trials"]))
        return audit_sandwich(E, phi, fs, lam_grid, float(cfg["nu"]), tol)

    report.checks += guarded(["sandwich"], sandwich)

    if E.flux_spec is not None:
        sub = check_structure(E.flux_spec, tolerance=tol, seed=_seed(seed, "structure"))
        report.checks += sub.checks
    else:
        report.checks.append(CheckResult.skip("structure", f"energy kind {E.kind!r} has no flux"))

    report.config_echo = {
        "seed": seed,
        "tolerance": tol,
        "h1_tolerance": h1_tol,
        "trials": trials,
        "h1_trials": int(cfg["h1_trials"]),
        "lambda_grid": lam_grid,
        "gamma_eps": [float(e) for e in cfg["gamma_eps"]],
        "sandwich_trials": int(cfg["sandwich_trials"]),
        "nu": float(cfg["nu"]),
        "j_family": [j.describe() for j in j_family],
        "t_family": [T.describe() for T in t_family],
        "domain": {"nodes": dom.node_count, "edges": dom.edge_count,
                   "boundary": int(dom.boundary.sum())},
        "energy": E.to_config(),
        "phi": phi.to_config(),
        "amplitude_range": list(AMPLITUDE_RANGE),
    }
    return report


# Planted defects: each config breaks one hypothesis. ``dedicated`` is the
# check built to catch it; ``targets`` is the full set of checks that must
# fail, derived from which hypotheses the energy violates.
PLANTED_DEFECTS = {
    "shifted_energy": {
        "config": {"energy": {"kind": "p_dirichlet", "p": 2.0, "shift": 0.5}},
        "dedicated": ["H1"],
        # a linear shift cancels in v - v_hat and in the (H2*) sums
        "targets": ["H1", "H3/gamma_eps", "H3/sign0", "H3/yosida", "sandwich"],
    },
    "antimonotone_flux": {
        "config": {"energy": {"kind": "leray_lions", "p": 2.0, "flux": "antimonotone"}},
        "dedicated": ["H2", "structure/monotonicity"],
        # the potential of a decreasing flux is concave, so every convexity consequence fails
        "targets": ["H1", "H2", "H2*", "H3/gamma_eps", "H3/sign0", "H3/yosida", "sandwich",
                    "structure/coercivity", "structure/monotonicity"],
    },
    "concave_quadratic": {
        "config": {"energy": {"kind": "concave_quadratic", "c": 1.0}},
        "dedicated": ["H2*"],
        "targets": ["H1", "H2", "H2*", "H3/gamma_eps", "H3/sign0", "H3/yosida", "sandwich"],
    },
    "offset_flux": {
        "config": {"energy": {"kind": "leray_lions", "p": 2.0, "flux": "offset", "offset": 1.0}},
        "dedicated": ["structure/zero"],
        # a constant flux offset telescopes away under Dirichlet pins
        "targets": ["structure/zero"],
    },
}
