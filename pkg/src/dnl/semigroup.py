"""Implicit Euler steps and the exponential formula ``(J_{t/n})^n u0``.

Each step is a resolvent solve with ``nu = 0``, ``lam = tau`` and
``f = u``, warm-started at the previous state.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .domain import norm, positive_part
from .energy import Energy
from .nonlinearity import Nonlinearity
from .resolvent import ResolventProblem, solve

CSV_COLUMNS = ("step", "time", "L1", "L2", "Linf", "mass")


def step(E: Energy, phi: Nonlinearity, u, tau: float, tol: float = 1e-10, max_iter: int = 200) -> np.ndarray:
    """One implicit Euler step ``u_next = (I + tau A_phi)^{-1} u``."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    u = E.domain.pin(u)
    return solve(ResolventProblem(E, phi, tau, 0.0, u), tol=tol, max_iter=max_iter).u


@dataclass
class EvolutionRun:
    u0: np.ndarray
    t_final: float
    n_steps: int
    trajectory: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)

    @property
    def tau(self) -> float:
        return self.t_final / self.n_steps

    @property
    def times(self) -> np.ndarray:
        return self.tau * np.arange(self.n_steps + 1)

    @property
    def final(self) -> np.ndarray:
        return self.trajectory[-1]

    def norms(self, dom) -> list[dict]:
        """Per-snapshot L1, L2, Linf and mass (the mu-integral)."""
        rows = []
        for k, (t, u) in enumerate(zip(self.times, self.trajectory)):
            rows.append({"step": k, "time": float(t), "L1": norm(dom, u, "L1"), "L2": norm(dom, u, "L2"),
                         "Linf": norm(dom, u, "Linf"), "mass": float(np.dot(dom.measure, u))})
        return rows

    def to_csv(self, dom) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in self.norms(dom):
            writer.writerow([row["step"]] + [repr(row[c]) for c in CSV_COLUMNS[1:]])
        return buf.getvalue()

    def to_dict(self, dom=None) -> dict:
        out = {"t_final": self.t_final, "n_steps": self.n_steps, "times": self.times,
               "trajectory": [u for u in self.trajectory], "diagnostics": self.diagnostics}
        if dom is not None:
            out["norms"] = self.norms(dom)
        return out


def evolve(E: Energy, phi: Nonlinearity, u0, t_final: float, n_steps: int, tol: float = 1e-10) -> EvolutionRun:
    """Iterate :func:`step` ``n_steps`` times with ``tau = t_final / n_steps``."""
    if int(n_steps) != n_steps or n_steps < 1:
        raise ValueError("n_steps must be a positive integer")
    if not t_final > 0:
        raise ValueError("t_final must be positive")
    n_steps = int(n_steps)
    dom = E.domain
    u = dom.pin(u0)
    run = EvolutionRun(u.copy(), float(t_final), n_steps, [u.copy()])
    tau = t_final / n_steps
    for k in range(n_steps):
        sol = solve(ResolventProblem(E, phi, tau, 0.0, u), tol=tol, u0=u)
        u = sol.u
        run.trajectory.append(u.copy())
        run.diagnostics.append({"step": k + 1, "iterations": sol.iterations, "residual": sol.kkt_residual})
    return run


@dataclass
class ContractionReport:
    positive_gap: np.ndarray      # ||[uA - uB]+||_1 per step
    l1_gap: np.ndarray            # ||uA - uB||_1 per step
    ordered_initially: bool
    order_margin: float           # min over steps/nodes of uB - uA (meaningful when ordered)
    slack: float = 1e-8
    order_tol: float = 1e-10

    @property
    def positive_gap_nonincreasing(self) -> bool:
        return bool(np.all(np.diff(self.positive_gap) <= self.slack))

    @property
    def l1_contraction(self) -> bool:
        return bool(np.all(self.l1_gap <= self.l1_gap[0] + self.slack))

    @property
    def order_preserved(self) -> bool:
        return (not self.ordered_initially) or self.order_margin >= -self.order_tol

    @property
    def passed(self) -> bool:
        return self.positive_gap_nonincreasing and self.l1_contraction and self.order_preserved


def compare_trajectories(run_a: EvolutionRun, run_b: EvolutionRun, dom) -> ContractionReport:
    """Contraction and order checks between two runs on the same schedule."""
    if run_a.n_steps != run_b.n_steps or run_a.t_final != run_b.t_final:
        raise ValueError("runs use different step schedules")
    pos = np.array([norm(dom, positive_part(a - b), "L1") for a, b in zip(run_a.trajectory, run_b.trajectory)])
    l1 = np.array([norm(dom, a - b, "L1") for a, b in zip(run_a.trajectory, run_b.trajectory)])
    ordered = bool(np.all(run_a.u0 <= run_b.u0))
    margin = min(float(np.min(b - a)) for a, b in zip(run_a.trajectory, run_b.trajectory))
    return ContractionReport(pos, l1, ordered, margin)


def cauchy_defects(E: Energy, phi: Nonlinearity, u0, t_final: float, ns=(8, 16, 32, 64, 128)) -> list[dict]:
    """``||u^(2n)(t) - u^(n)(t)||_1`` for each ``n`` in ``ns``."""
    dom = E.domain
    finals = {}
    for n in sorted(set(ns) | {2 * n for n in ns}):
        finals[n] = evolve(E, phi, u0, t_final, n).final
    return [{"n": int(n), "defect": norm(dom, finals[2 * n] - finals[n], "L1")} for n in ns]
