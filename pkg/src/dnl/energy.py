"""Convex energies with subgradient access.

Built-ins are edge sums ``E(u) = sum_e c_e A_e(s_e (u_j - u_i))``:

* :class:`GraphPDirichlet` -- ``c_e = w_e``, ``s_e = 1`` and
  ``A(d) = |d|^p / p``, the graph p-Dirichlet energy;
* :class:`LerayLions1D` -- forward differences ``Du = (u_{k+1}-u_k)/h`` on a
  path grid with cell weight ``h`` and a user flux ``a(x, xi)`` with
  potential ``A(x, xi)``.

The subgradient is the gradient for the mu-weighted pairing,
``v_i = (dE/du_i) / mu_i``, reported as 0 on boundary nodes. For the
graph energy this is the graph p-Laplacian divided by the node mass.

For p < 2 the potential is smoothed to ``((d^2 + eps^2)^(p/2) - eps^p)/p``
(default ``eps_reg = 1e-8``) so the Hessian stays finite; the constant
shift keeps ``E(0) = 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import sparse

from ._expr import compile_expression
from .domain import DiscreteDomain, negative_part, positive_part
from .errors import ConfigError, SingularGradientError
from .report import AuditReport, CheckResult

DEFAULT_EPS_SMALL_P = 1e-8


def default_eps_reg(p: float) -> float:
    return DEFAULT_EPS_SMALL_P if p < 2 else 0.0


# -- regularized p-power pieces -------------------------------------------

def _p_potential(xi, p, eps):
    if eps == 0:
        return np.abs(xi) ** p / p
    return ((xi * xi + eps * eps) ** (p / 2) - eps**p) / p


def _p_flux(xi, p, eps):
    if eps == 0:
        return np.sign(xi) * np.abs(xi) ** (p - 1)
    return (xi * xi + eps * eps) ** ((p - 2) / 2) * xi


def _p_flux_derivative(xi, p, eps):
    if eps == 0:
        a = np.abs(xi)
        if p == 2:
            return np.ones_like(a)
        with np.errstate(divide="ignore"):
            return (p - 1) * a ** (p - 2)
    r2 = xi * xi + eps * eps
    return r2 ** ((p - 4) / 2) * ((p - 1) * xi * xi + eps * eps)


def _as_field(value) -> Callable:
    """Constant, callable, or expression string -> vectorized f(x)."""
    if callable(value):
        return value
    if isinstance(value, str):
        return compile_expression(value)
    c = float(value)
    return lambda x: np.full(np.shape(x), c)


@dataclass
class LerayLionsSpec:
    """Flux ``a(x, xi)`` with potential ``A(x, xi)`` and structure data.

    ``a0, a1, a2`` are callables of x; ``eta`` is the coercivity constant.
    The structure conditions are zero flux at xi = 0, growth
    ``|a| <= a0 |xi|^(p-1) + a1``, coercivity ``a xi >= eta |xi|^p - a2``,
    monotonicity, and ``dA/dxi = a``. ``flux_derivative`` is optional;
    it is needed by Newton-type solvers only.
    """

    p: float
    flux: Callable
    potential: Callable
    a0: Callable
    a1: Callable
    a2: Callable
    eta: float
    flux_derivative: Callable | None = None
    x_range: tuple = (0.0, 1.0)
    label: str = "custom"
    config: dict | None = None

    def __post_init__(self):
        if not self.p > 1:
            raise ValueError("Leray-Lions exponent must satisfy p > 1")

    @classmethod
    def weighted_p_flux(cls, p, kappa=1.0, eps_reg=None, x_range=(0.0, 1.0)):
        """``a = kappa(x) |xi|^(p-2) xi`` and ``A = kappa(x) |xi|^p / p``."""
        p = float(p)
        eps = default_eps_reg(p) if eps_reg is None else float(eps_reg)
        k = _as_field(kappa)
        kmin = _field_min(k, x_range)
        if not kmin > 0:
            raise ConfigError("kappa must be positive on the domain")
        return cls(
            p=p,
            flux=lambda x, xi: k(x) * _p_flux(xi, p, eps),
            potential=lambda x, xi: k(x) * _p_potential(xi, p, eps),
            flux_derivative=lambda x, xi: k(x) * _p_flux_derivative(xi, p, eps),
            a0=_growth_constant(k, p, eps),
            a1=lambda x: np.zeros(np.shape(x)),
            # a xi >= kappa |xi|^p - kappa eps^p when p < 2
            a2=(lambda x: k(x) * eps**p) if p < 2 else (lambda x: np.zeros(np.shape(x))),
            eta=kmin,
            x_range=tuple(x_range),
            label="weighted_p_flux",
            config={"flux": "p_flux", "p": p, "kappa": _field_repr(kappa), "eps_reg": eps},
        )

    @classmethod
    def antimonotone(cls, p, kappa=1.0, x_range=(0.0, 1.0)):
        """Planted defect: ``a = -kappa |xi|^(p-2) xi`` with its (concave) potential."""
        p = float(p)
        k = _as_field(kappa)
        return cls(
            p=p,
            flux=lambda x, xi: -k(x) * _p_flux(xi, p, 0.0),
            potential=lambda x, xi: -k(x) * _p_potential(xi, p, 0.0),
            flux_derivative=lambda x, xi: -k(x) * _p_flux_derivative(xi, p, 0.0),
            a0=k,
            a1=lambda x: np.zeros(np.shape(x)),
            a2=lambda x: np.zeros(np.shape(x)),
            eta=_field_min(k, x_range),
            x_range=tuple(x_range),
            label="antimonotone",
            config={"flux": "antimonotone", "p": p, "kappa": _field_repr(kappa)},
        )

    @classmethod
    def offset(cls, p, kappa=1.0, offset=1.0, x_range=(0.0, 1.0)):
        """Planted defect: ``a = kappa |xi|^(p-2) xi + offset``, so ``a(x, 0) != 0``.

        Growth and coercivity still hold with ``a1 = |offset|``,
        ``eta = kappa_min / 2`` and the matching ``a2``.
        """
        p, b = float(p), float(offset)
        k = _as_field(kappa)
        kmin = _field_min(k, x_range)
        c = kmin / 2
        t = (abs(b) / (c * p)) ** (1 / (p - 1)) if b else 0.0
        a2 = abs(b) * t * (1 - 1 / p)  # max_t (|b| t - c t^p)
        return cls(
            p=p,
            flux=lambda x, xi: k(x) * _p_flux(xi, p, 0.0) + b,
            potential=lambda x, xi: k(x) * _p_potential(xi, p, 0.0) + b * xi,
            flux_derivative=lambda x, xi: k(x) * _p_flux_derivative(xi, p, 0.0),
            a0=_growth_constant(k, p, 0.0),
            a1=lambda x: np.full(np.shape(x), abs(b)),
            a2=lambda x: np.full(np.shape(x), a2),
            eta=c,
            x_range=tuple(x_range),
            label="offset",
            config={"flux": "offset", "p": p, "kappa": _field_repr(kappa), "offset": b},
        )


def _field_repr(value):
    if isinstance(value, str):
        return value
    if callable(value):
        return getattr(value, "source", getattr(value, "__name__", "callable"))
    return float(value)


def _field_min(k, x_range, n=2049):
    return float(np.min(k(np.linspace(x_range[0], x_range[1], n))))


def _growth_constant(k, p, eps):
    if p >= 2 and eps > 0:
        raise ConfigError("smoothing is only supported for p < 2")
    return k


# -- energies --------------------------------------------------------------

class Energy:
    """Proper convex functional on node vectors (boundary entries pinned to 0)."""

    kind = "abstract"
    flux_spec: LerayLionsSpec | None = None
    eps_reg = 0.0

    def __init__(self, domain: DiscreteDomain):
        self.domain = domain

    @property
    def smoothing_active(self) -> bool:
        return self.eps_reg > 0

    def value(self, u) -> float:
        raise NotImplementedError

    def grad(self, u) -> np.ndarray:
        """Euclidean gradient ``dE/du`` (not divided by the measure)."""
        raise NotImplementedError

    def hessian(self, u, secant: bool = False):
        """Euclidean Hessian as a sparse ``(n, n)`` matrix.

        With ``secant=True`` edge energies return the lagged-diffusivity
        model, curvature ``flux(d) / d`` in place of ``flux'(d)``; other
        energies ignore the flag.
        """
        raise NotImplementedError

    def subgradient(self, u) -> np.ndarray:
        """Selection ``v`` of the subgradient for the L2(mu) pairing."""
        u = self.domain.check(u)
        v = self.grad(u) / self.domain.measure
        v[self.domain.boundary] = 0.0
        return v

    def to_config(self) -> dict:
        raise NotImplementedError


class _EdgeEnergy(Energy):
    """Shared machinery for ``sum_e c_e A_e(s_e (u_j - u_i))``."""

    def _setup(self, i, j, c, s, x, potential, flux, dflux):
        self._i, self._j = np.asarray(i), np.asarray(j)
        self._c, self._s, self._x = np.asarray(c, float), np.asarray(s, float), np.asarray(x, float)
        self._pot, self._flux, self._dflux = potential, flux, dflux

    def _diff(self, u):
        u = self.domain.check(u)
        return self._s * (u[self._j] - u[self._i])

    def value(self, u):
        d = self._diff(u)
        return float(np.sum(self._c * self._pot(self._x, d)))

    def grad(self, u):
        d = self._diff(u)
        g = self._c * self._s * self._flux(self._x, d)
        n = self.domain.node_count
        return np.bincount(self._j, g, n) - np.bincount(self._i, g, n)

    def edge_curvature(self, u, secant: bool = False):
        d = self._diff(u)
        if self._dflux is None:
            raise NotImplementedError("flux derivative not available")
        k = self._dflux(self._x, d)
        if secant:
            nz = d != 0
            k = np.where(nz, self._flux(self._x, np.where(nz, d, 1.0)) / np.where(nz, d, 1.0), k)
        k = self._c * self._s**2 * k
        if not np.all(np.isfinite(k)):
            bad = int(np.flatnonzero(~np.isfinite(k))[0])
            raise SingularGradientError(
                f"flux derivative is unbounded on edge ({self._i[bad]}, {self._j[bad]}); "
                "set eps_reg > 0"
            )
        return k

    def hessian(self, u, secant: bool = False):
        k = self.edge_curvature(u, secant)
        n = self.domain.node_count
        i, j = self._i, self._j
        rows = np.concatenate([i, j, i, j])
        cols = np.concatenate([i, j, j, i])
        vals = np.concatenate([k, k, -k, -k])
        return sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))


class GraphPDirichlet(_EdgeEnergy):
    """``E(u) = (1/p) sum_edges w_ij |u_i - u_j|^p``."""

    kind = "p_dirichlet"

    def __init__(self, domain: DiscreteDomain, p: float, eps_reg: float | None = None):
        super().__init__(domain)
        p = float(p)
        if not p > 1:
            raise ValueError("p must exceed 1")
        self.p = p
        self.eps_reg = default_eps_reg(p) if eps_reg is None else float(eps_reg)
        if p >= 2 and self.eps_reg:
            raise ConfigError("eps_reg smoothing is only used for p < 2")
        eps = self.eps_reg
        self._setup(domain.edge_i, domain.edge_j, domain.edge_w, np.ones(domain.edge_count),
                    np.zeros(domain.edge_count),
                    lambda x, d: _p_potential(d, p, eps),
                    lambda x, d: _p_flux(d, p, eps),
                    lambda x, d: _p_flux_derivative(d, p, eps))
        self.flux_spec = LerayLionsSpec.weighted_p_flux(p, 1.0, eps)

    def to_config(self):
        return {"kind": self.kind, "p": self.p, "eps_reg": self.eps_reg}


class LerayLions1D(_EdgeEnergy):
    """``E(u) = sum_cells h A(x_mid, (u_{k+1} - u_k)/h)`` on a path grid."""

    kind = "leray_lions"

    def __init__(self, domain: DiscreteDomain, spec: LerayLionsSpec):
        super().__init__(domain)
        if domain.coords is None:
            raise ConfigError("LerayLions1D needs a domain with node coordinates (use build_path_grid)")
        xs = domain.coords
        i, j = domain.edge_i.copy(), domain.edge_j.copy()
        flip = xs[j] < xs[i]
        i[flip], j[flip] = j[flip], i[flip]
        h = xs[j] - xs[i]
        if np.any(h <= 0):
            raise ConfigError("edge endpoints must have distinct coordinates")
        self.spec = spec
        self.p = spec.p
        self.flux_spec = spec
        self.eps_reg = float((spec.config or {}).get("eps_reg", 0.0))
        self._setup(i, j, h, 1.0 / h, 0.5 * (xs[i] + xs[j]), spec.potential, spec.flux, spec.flux_derivative)

    def to_config(self):
        cfg = {"kind": self.kind}
        cfg.update(self.spec.config or {"flux": self.spec.label, "p": self.p})
        return cfg


class ShiftedEnergy(Energy):
    """``E0(u) + <b, u>_mu`` -- violates ``E(0) = min E`` when ``b != 0``."""

    kind = "shifted"

    def __init__(self, base: Energy, b):
        super().__init__(base.domain)
        self.base = base
        self._b_config = float(b) if np.ndim(b) == 0 else np.asarray(b, dtype=float).tolist()
        b = np.broadcast_to(np.asarray(b, dtype=float), (base.domain.node_count,)).copy()
        b[base.domain.boundary] = 0.0
        self.b = b
        self.flux_spec = base.flux_spec
        self.eps_reg = base.eps_reg
        self.p = getattr(base, "p", None)

    def value(self, u):
        u = self.domain.check(u)
        return self.base.value(u) + float(np.dot(self.domain.measure, self.b * u))

    def grad(self, u):
        return self.base.grad(u) + self.domain.measure * self.b

    def hessian(self, u, secant: bool = False):
        return self.base.hessian(u, secant)

    def to_config(self):
        cfg = dict(self.base.to_config())
        cfg["shift"] = self._b_config
        return cfg


class ConcaveQuadratic(Energy):
    """``-c ||u||_2^2`` -- a nonconvex energy for planted-defect tests."""

    kind = "concave_quadratic"

    def __init__(self, domain: DiscreteDomain, c: float = 1.0):
        super().__init__(domain)
        self.c = float(c)

    def value(self, u):
        u = self.domain.check(u)
        return -self.c * float(np.dot(self.domain.measure, u * u))

    def grad(self, u):
        return -2.0 * self.c * self.domain.measure * self.domain.check(u)

    def hessian(self, u, secant: bool = False):
        return sparse.diags(-2.0 * self.c * self.domain.measure).tocsr()

    def to_config(self):
        return {"kind": self.kind, "c": self.c}


def energy_from_config(cfg: dict, domain: DiscreteDomain) -> Energy:
    """Energy from ``{"kind": "p_dirichlet", "p": 3}`` or ``{"kind": "leray_lions", ...}``.

    Optional ``"shift"`` wraps the result in :class:`ShiftedEnergy`.
    """
    kind = str(cfg.get("kind", "")).lower()
    if kind == "p_dirichlet":
        E = GraphPDirichlet(domain, cfg.get("p", 2.0), cfg.get("eps_reg"))
    elif kind == "leray_lions":
        p = cfg.get("p", 2.0)
        kappa = cfg.get("kappa", 1.0)
        xr = (0.0, float(domain.coords[-1])) if domain.coords is not None else (0.0, 1.0)
        flux = cfg.get("flux", "p_flux")
        if flux == "p_flux":
            spec = LerayLionsSpec.weighted_p_flux(p, kappa, cfg.get("eps_reg"), x_range=xr)
        elif flux == "antimonotone":
            spec = LerayLionsSpec.antimonotone(p, kappa, x_range=xr)
        elif flux == "offset":
            spec = LerayLionsSpec.offset(p, kappa, cfg.get("offset", 1.0), x_range=xr)
        else:
            raise ConfigError(f"unknown flux {flux!r}")
        E = LerayLions1D(domain, spec)
    elif kind == "concave_quadratic":
        E = ConcaveQuadratic(domain, cfg.get("c", 1.0))
    else:
        raise ConfigError(f"unknown energy kind {cfg.get('kind')!r}")
    if cfg.get("shift"):
        E = ShiftedEnergy(E, cfg["shift"])
    return E


# -- functional surface and checks ----------------------------------------

def energy_value(E: Energy, u) -> float:
    return E.value(u)


def subgradient(E: Energy, u) -> np.ndarray:
    return E.subgradient(u)


def _derivative5(f, x, xi, step):
    return (-f(x, xi + 2 * step) + 8 * f(x, xi + step) - 8 * f(x, xi - step) + f(x, xi - 2 * step)) / (12 * step)


def default_structure_sampler(seed=0, count=200, x_range=(0.0, 1.0)):
    """``count`` triples ``(x, xi, xi')`` with log-uniform ``|xi|`` in [1e-3, 10]."""
    rng = np.random.default_rng(seed)
    x = rng.uniform(x_range[0], x_range[1], count)
    mags = 10.0 ** rng.uniform(-3, 1, (2, count))
    signs = rng.choice([-1.0, 1.0], (2, count))
    xi, xi2 = mags * signs
    return list(zip(x.tolist(), xi.tolist(), xi2.tolist()))


STRUCTURE_NOTE = ("monotonicity is checked as (a(x,xi1)-a(x,xi2))(xi1-xi2) >= 0; "
                  "the printed condition repeats xi1 in the second flux slot")


def check_structure(spec: LerayLionsSpec, sampler=None, tolerance: float = 1e-8, seed=0) -> AuditReport:
    """Sample the five structure conditions of a flux/potential pair.

    ``sampler`` is an iterable of ``(x, xi, xi')`` triples (default:
    :func:`default_structure_sampler`). Margins other than the zero
    condition are relative to ``max(1, |terms|)``. Failures are data:
    nothing is raised.
    """
    if sampler is None:
        sampler = default_structure_sampler(seed, 200, spec.x_range)
    x, xi, xi2 = (np.asarray(v, dtype=float) for v in zip(*list(sampler)))
    p = spec.p

    a = spec.flux(x, xi)
    a2 = spec.flux(x, xi2)
    a_zero = spec.flux(x, np.zeros_like(x))

    def wit(k, with_second=False):
        w = {"x": x[k], "xi": xi[k]}
        if with_second:
            w["xi_prime"] = xi2[k]
        return w

    checks = []
    checks.append(CheckResult.from_margins("structure/zero", -np.abs(a_zero),
                                           lambda k: {"x": x[k], "xi": 0.0}, tolerance))

    bound = spec.a0(x) * np.abs(xi) ** (p - 1) + spec.a1(x)
    m = (bound - np.abs(a)) / np.maximum(1.0, np.maximum(bound, np.abs(a)))
    checks.append(CheckResult.from_margins("structure/growth", m, wit, tolerance))

    lower = spec.eta * np.abs(xi) ** p - spec.a2(x)
    ax = a * xi
    m = (ax - lower) / np.maximum(1.0, np.maximum(np.abs(ax), np.abs(lower)))
    checks.append(CheckResult.from_margins("structure/coercivity", m, wit, tolerance))

    prod = (a - a2) * (xi - xi2)
    scale = np.maximum(1.0, (np.abs(a) + np.abs(a2)) * np.abs(xi - xi2))
    checks.append(CheckResult.from_margins("structure/monotonicity", prod / scale,
                                           lambda k: wit(k, True), tolerance, note=STRUCTURE_NOTE))

    step = 1e-3 * np.maximum(np.abs(xi), 1e-3)
    fd = _derivative5(spec.potential, x, xi, step)
    m = -np.abs(fd - a) / np.maximum(1.0, np.abs(a))
    checks.append(CheckResult.from_margins("structure/gradient", m, wit, tolerance))

    return AuditReport(checks=checks, header=[STRUCTURE_NOTE],
                       config_echo={"flux": spec.label, "p": p, "samples": int(x.size), "tolerance": tolerance})


@dataclass
class H2StarResult:
    passed: bool
    margin: float
    lhs: float
    rhs: float

    @property
    def scaled_margin(self) -> float:
        return self.margin / max(1.0, abs(self.lhs), abs(self.rhs))


def check_H2star(E: Energy, u, u_hat, T, tol: float = 1e-8) -> H2StarResult:
    """``E(u + T(u^ - u)) + E(u^ - T(u^ - u)) <= E(u) + E(u^)``.

    ``margin`` is RHS - LHS; the pass test scales ``tol`` by
    ``max(1, |LHS|, |RHS|)``.
    """
    u = E.domain.check(u)
    u_hat = E.domain.check(u_hat)
    t = T(u_hat - u)
    lhs = E.value(u + t) + E.value(u_hat - t)
    rhs = E.value(u) + E.value(u_hat)
    margin = rhs - lhs
    return H2StarResult(bool(margin >= -tol * max(1.0, abs(lhs), abs(rhs))), margin, lhs, rhs)


def lattice_identity_check(phi, u) -> bool:
    """``phi(u+) == [phi(u)]+`` and ``phi(u-) == [phi(u)]-`` pointwise, exactly."""
    u = np.asarray(u, dtype=float)
    w = phi(u)
    return bool(np.array_equal(phi(positive_part(u)), positive_part(w))
                and np.array_equal(phi(negative_part(u)), negative_part(w)))


def is_finite_energy(E: Energy, u) -> bool:
    return math.isfinite(E.value(u))
