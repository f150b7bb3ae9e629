"""Regularized resolvent of the doubly nonlinear operator.

Given ``f``, ``lam > 0`` and ``nu >= 0``, find ``u`` with

    u + lam * (nu * phi(u) + dE(phi(u))) = f.

With ``w = phi(u)`` this is the optimality condition of the strictly convex

    G(w) = sum mu Psi(w) + (lam nu / 2) sum mu w^2 + lam E(w) - sum mu f w,

``Psi' = phi^{-1}``. The minimization is carried out by damped Newton in
the variable ``s = u + phi(u)``: both ``u(s)`` and ``w(s)`` are monotone
and 1-Lipschitz, so the Newton matrix

    J = diag(mu (u'(s) + lam nu w'(s))) + lam * Hess E(w) diag(w'(s))

stays finite for slow (m > 1) and fast (m < 1) diffusion alike. Whenever
``Hess G`` is finite, ``J ds = -grad G`` maps to the plain Newton step
``dw = w'(s) ds`` for ``G``. Steps are globalized by Armijo backtracking
on ``G``; a step that fails Armijo is still accepted if it shrinks the
residual by the same Armijo factor, which is what lets the iteration
reach residuals far below the rounding level of ``G`` itself.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as splinalg

from .energy import Energy
from .errors import NonConvergenceError
from .nonlinearity import Nonlinearity

ARMIJO_C = 1e-4
MIN_STEP = 2.0**-40
G_NOISE = 1e-12


@dataclass
class ResolventProblem:
    energy: Energy
    phi: Nonlinearity
    lam: float
    nu: float
    f: np.ndarray

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if not self.nu >= 0:
            raise ValueError("nu must be nonnegative")
        f = np.array(self.energy.domain.check(self.f), dtype=float)
        if not np.all(np.isfinite(f)):
            raise ValueError("f must be finite")
        if np.any(f[self.energy.domain.boundary] != 0):
            raise ValueError("f must vanish on boundary nodes")
        f.flags.writeable = False
        self.f = f

    @property
    def domain(self):
        return self.energy.domain

    def with_f(self, f) -> ResolventProblem:
        return ResolventProblem(self.energy, self.phi, self.lam, self.nu, f)

    def with_lam(self, lam) -> ResolventProblem:
        return ResolventProblem(self.energy, self.phi, lam, self.nu, self.f)


@dataclass
class ResolventSolution:
    u: np.ndarray
    w: np.ndarray
    kkt_residual: float
    u_residual: float
    iterations: int
    objective_value: float
    diagnostics: list = field(default_factory=list)
    smoothing_active: bool = False


def objective(problem: ResolventProblem, w) -> float:
    """``G(w)``; its minimizer is ``phi(u)`` for the resolvent solution ``u``."""
    dom = problem.domain
    w = dom.check(w)
    if np.any(w[dom.boundary] != 0):
        raise ValueError("w must vanish on boundary nodes")
    mu = dom.measure
    lam, nu = problem.lam, problem.nu
    return float(np.dot(mu, problem.phi.dual_primitive(w))
                 + 0.5 * lam * nu * np.dot(mu, w * w)
                 + lam * problem.energy.value(w)
                 - np.dot(mu, problem.f * w))


def inclusion_residual(problem: ResolventProblem, u) -> float:
    """``||u + lam nu phi(u) + lam dE(phi(u)) - f||_2`` (mu-weighted, free nodes)."""
    dom = problem.domain
    u = dom.pin(u)
    w = problem.phi(u)
    r = u + problem.lam * (problem.nu * w + problem.energy.subgradient(w)) - problem.f
    r[dom.boundary] = 0.0
    return float(np.sqrt(np.dot(dom.measure, r * r)))


class _State:
    __slots__ = ("s", "u", "w", "du", "dw", "r", "res", "G")


def _evaluate(problem: ResolventProblem, s) -> _State:
    dom = problem.domain
    st = _State()
    st.s = s
    st.u, st.w, st.du, st.dw = problem.phi.split(s)
    lam, nu = problem.lam, problem.nu
    r = st.u - problem.f + lam * (nu * st.w + problem.energy.subgradient(st.w))
    r[dom.boundary] = 0.0
    st.r = r
    st.res = float(np.sqrt(np.dot(dom.measure, r * r)))
    mu = dom.measure
    st.G = float(np.dot(mu, problem.phi.dual_primitive(st.w))
                 + 0.5 * lam * nu * np.dot(mu, st.w * st.w)
                 + lam * problem.energy.value(st.w)
                 - np.dot(mu, problem.f * st.w))
    return st


def _newton_direction(problem: ResolventProblem, st: _State, free, secant=False):
    mu = problem.domain.measure[free]
    lam, nu = problem.lam, problem.nu
    dw = st.dw[free]
    H = problem.energy.hessian(st.w, secant)[free][:, free]
    diag = mu * (st.du[free] + lam * nu * dw)
    J = (sparse.diags(diag) + lam * (H @ sparse.diags(dw))).tocsc()
    rhs = -(mu * st.r[free])
    shift = 0.0
    for _ in range(8):
        A = J if shift == 0.0 else (J + sparse.diags(shift * mu)).tocsc()
        try:
            with np.errstate(all="ignore"), warnings.catch_warnings():
                warnings.simplefilter("ignore", splinalg.MatrixRankWarning)
                d = splinalg.spsolve(A, rhs)
        except RuntimeError:
            d = None
        if d is not None and np.all(np.isfinite(d)):
            return d, shift
        # Levenberg shift for the doubly degenerate case (phi'(u) = inf, nu = 0, flat E)
        shift = 1e-10 if shift == 0.0 else shift * 100.0
    return None, shift


def _line_search(problem, st, direction, free, slope):
    alpha = 1.0
    while alpha >= MIN_STEP:
        s_new = st.s.copy()
        s_new[free] += alpha * direction
        with np.errstate(all="ignore"):
            trial = _evaluate(problem, s_new)
        if math.isfinite(trial.G) and math.isfinite(trial.res):
            if trial.G <= st.G + ARMIJO_C * alpha * slope:
                return trial, alpha, "armijo"
            # below the rounding level of G, progress is judged by the residual
            noise = G_NOISE * (1.0 + abs(st.G))
            if trial.G <= st.G + noise and trial.res <= (1.0 - ARMIJO_C * alpha) * st.res:
                return trial, alpha, "residual"
        alpha *= 0.5
    return None, alpha, "failed"


def solve(problem: ResolventProblem, tol: float = 1e-10, max_iter: int = 200, u0=None) -> ResolventSolution:
    """Solve the resolvent inclusion to KKT residual ``tol``.

    Parameters
    ----------
    problem : ResolventProblem
    tol : float
        Bound on the mu-weighted L2 norm of
        ``phi^{-1}(w) + lam nu w + lam dE(w) - f``.
    max_iter : int
        Newton iteration budget; exceeding it raises
        :class:`~dnl.errors.NonConvergenceError` carrying the best iterate.
    u0 : array, optional
        Initial guess for ``u`` (default ``f``, i.e. ``w0 = phi(f)``).
        Sweeps pass the previous solution here.

    Raises
    ------
    SingularGradientError
        Propagated from the energy when its Hessian is unbounded
        (p < 2 without smoothing); retry with ``eps_reg > 0``.
    """
    dom = problem.domain
    free = dom.free
    start = problem.f if u0 is None else dom.pin(u0)
    s = np.zeros(dom.node_count)
    s[free] = start[free] + problem.phi(start[free])
    st = _evaluate(problem, s)
    best = st
    log = []
    it = 0
    while st.res > tol:
        if it >= max_iter:
            raise NonConvergenceError(
                f"resolvent solve stopped after {max_iter} iterations at residual {best.res:.3e}",
                best=_to_solution(problem, best, it, log), residual=best.res)
        it += 1
        trial = None
        # Newton and lagged-diffusivity models compete; the latter avoids the
        # sign-flip oscillation of Newton on edges where |flux'| blows up (p < 2)
        for secant in (False, True):
            direction, shift = _newton_direction(problem, st, free, secant)
            if direction is None:
                continue
            slope = float(np.dot(dom.measure[free] * st.r[free], st.dw[free] * direction))
            cand, a, h = _line_search(problem, st, direction, free, min(slope, 0.0))
            if cand is not None and (trial is None or cand.G < trial.G
                                     or (cand.G == trial.G and cand.res < trial.res)):
                trial, alpha, how = cand, a, h
                kind = "secant" if secant else "newton"
        if trial is None:
            # gradient fallback: steepest descent of G in s, preconditioned by 1/mu
            kind = "gradient"
            direction = -st.r[free]
            slope = -float(np.dot(dom.measure[free] * st.r[free], st.dw[free] * st.r[free]))
            trial, alpha, how = _line_search(problem, st, direction, free, slope)
        if trial is None:
            raise NonConvergenceError(
                f"line search failed at residual {st.res:.3e}",
                best=_to_solution(problem, best, it, log), residual=best.res)
        if np.array_equal(trial.s, st.s):
            raise NonConvergenceError(
                f"resolvent solve stagnated at residual {best.res:.3e} (floating-point floor; "
                "a larger eps_reg or looser tol may help)",
                best=_to_solution(problem, best, it, log), residual=best.res)
        log.append({"iteration": it, "direction": kind, "step": alpha, "accepted_by": how,
                    "levenberg_shift": shift, "residual": trial.res, "objective": trial.G})
        st = trial
        if st.res < best.res:
            best = st
    return _to_solution(problem, st, it, log)


def _to_solution(problem, st, it, log) -> ResolventSolution:
    dom = problem.domain
    u = st.u.copy()
    w = st.w.copy()
    u[dom.boundary] = 0.0
    w[dom.boundary] = 0.0
    return ResolventSolution(
        u=u, w=w, kkt_residual=st.res, u_residual=inclusion_residual(problem, u),
        iterations=it, objective_value=st.G, diagnostics=list(log),
        smoothing_active=problem.energy.smoothing_active,
    )


def key_inequality_margin(problem: ResolventProblem, solution: ResolventSolution, phi: Nonlinearity | None = None) -> float:
    """RHS - LHS of the inequality obtained by testing the subgradient at ``phi(f)``.

    LHS = <f - u, phi(f) - phi(u)> + lam (E(phi(u)) - E(phi(f))),
    RHS = lam nu <phi(u), phi(f) - phi(u)>. Nonnegative for exact solutions.
    """
    phi = problem.phi if phi is None else phi
    dom = problem.domain
    mu = dom.measure
    f, u = problem.f, solution.u
    pf, pu = phi(f), phi(u)
    E = problem.energy
    lhs = np.dot(mu, (f - u) * (pf - pu)) + problem.lam * (E.value(pu) - E.value(pf))
    rhs = problem.lam * problem.nu * np.dot(mu, pu * (pf - pu))
    return float(rhs - lhs)


def pointwise_product_flambda(f, solution, phi: Nonlinearity) -> np.ndarray:
    """``(f - u)(phi(f) - phi(u))`` node by node; nonnegative since phi increases."""
    u = solution.u if isinstance(solution, ResolventSolution) else np.asarray(solution, dtype=float)
    f = np.asarray(f, dtype=float)
    return (f - u) * (phi(f) - phi(u))
