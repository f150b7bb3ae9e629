"""Scalar nonlinearities phi and the machinery built on them.

Every :class:`Nonlinearity` is a continuous, strictly increasing bijection
of the real line with ``phi(0) == 0``. Besides evaluation it provides the
inverse, the convex potential ``Psi(s) = int_0^s phi^{-1}`` of the inverse,
and :meth:`Nonlinearity.split`, which decomposes ``s = u + phi(u)``. The
resolvent solver works in that ``s`` variable because both ``u(s)`` and
``phi(u(s))`` are 1-Lipschitz, whatever the degeneracy of phi at 0.

The module also holds the Yosida operator of ``phi^{-1}``, the restricted
signum, its piecewise linear approximations ``gamma_eps`` and the sampled
test-function families used by the audits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate

from .errors import ConfigError, NonConvergenceError, NumericalError

_BISECT_WIDTH = 1e-13
_MAX_EXPAND = 1100


def _bracket_solve(g, target, lo, hi, dg=None, expand=True):
    """Vectorized root of the increasing map ``g(x) = target``.

    ``lo``/``hi`` are initial brackets; with ``expand`` they are doubled
    outward until they straddle the target. Bisection runs to relative
    width ``1e-13``; two Newton polish steps follow when ``dg`` is given,
    each kept only if it stays in the bracket and lowers the residual.
    """
    target = np.asarray(target, dtype=float)
    lo = np.broadcast_to(np.asarray(lo, dtype=float), target.shape).copy()
    hi = np.broadcast_to(np.asarray(hi, dtype=float), target.shape).copy()
    if expand:
        for _ in range(_MAX_EXPAND):
            bad_lo = g(lo) > target
            bad_hi = g(hi) < target
            if not (bad_lo.any() or bad_hi.any()):
                break
            with np.errstate(over="ignore"):
                lo = np.where(bad_lo, 2.0 * lo, lo)
                hi = np.where(bad_hi, 2.0 * hi, hi)
        else:
            raise NonConvergenceError("bracket expansion failed; is the map surjective?")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise NonConvergenceError("bracket expansion overflowed; is the map surjective?")

    for _ in range(2000):
        width = hi - lo
        active = width > _BISECT_WIDTH * np.maximum(np.abs(lo), np.abs(hi))
        if not active.any():
            break
        mid = 0.5 * (lo + hi)
        # floating point exhaustion: midpoint equals an endpoint
        active &= (mid != lo) & (mid != hi)
        if not active.any():
            break
        below = g(mid) < target
        lo = np.where(active & below, mid, lo)
        hi = np.where(active & ~below, mid, hi)

    x = 0.5 * (lo + hi)
    if dg is not None:
        for _ in range(2):
            r = g(x) - target
            d = dg(x)
            with np.errstate(divide="ignore", invalid="ignore"):
                cand = x - r / d
            ok = np.isfinite(cand) & (cand >= lo) & (cand <= hi)
            if ok.any():
                better = ok & (np.abs(g(np.where(ok, cand, x)) - target) <= np.abs(r))
                x = np.where(better, cand, x)
    return x


def _solve_x_plus_power(t, q):
    """Nonnegative root of ``x + x**q = t`` for ``t >= 0`` and ``q >= 1``.

    ``x -> x + x**q`` is convex and increasing on [0, inf), and the start
    ``min(t, t**(1/q))`` lies right of the root, so Newton decreases
    monotonically to it. Working with the smaller unknown keeps relative
    accuracy when the two terms differ by many orders of magnitude.
    """
    t = np.asarray(t, dtype=float)
    x = np.minimum(t, t ** (1.0 / q))
    for _ in range(200):
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            xq1 = x ** (q - 1.0)
            step = (x + x * xq1 - t) / (1.0 + q * xq1)
        step = np.where(np.isfinite(step), step, 0.0)
        x_new = np.maximum(x - step, 0.0)
        moving = x_new < x
        if not moving.any():
            break
        x = np.where(moving, x_new, x)
    return x


class Nonlinearity:
    """Base class. Subclasses implement the vectorized primitives."""

    kind = "abstract"
    strictly_increasing = True
    continuous = True
    surjective = True
    phi_zero_is_zero = True
    locally_lipschitz = True

    def __call__(self, r):
        raise NotImplementedError

    def inverse(self, s):
        raise NotImplementedError

    def derivative(self, r):
        """``phi'(r)``; may be 0 or ``inf`` at degenerate points."""
        raise NotImplementedError

    def dual_primitive(self, s):
        """``Psi(s) = int_0^s phi^{-1}(sigma) dsigma`` (convex, ``Psi' = phi^{-1}``)."""
        raise NotImplementedError

    def split(self, s):
        """Solve ``u + phi(u) = s`` pointwise.

        Returns ``(u, w, du_ds, dw_ds)`` with ``w = phi(u)``. The two
        derivatives are nonnegative and sum to 1.
        """
        raise NotImplementedError

    def to_config(self) -> dict:
        raise NotImplementedError

    def guarantees(self) -> dict:
        return {
            "strictly_increasing": self.strictly_increasing,
            "continuous": self.continuous,
            "surjective": self.surjective,
            "phi_zero_is_zero": self.phi_zero_is_zero,
            "locally_lipschitz": self.locally_lipschitz,
        }

    def __repr__(self):
        return f"{type(self).__name__}({self.to_config()})"


class PowerLaw(Nonlinearity):
    """``phi(r) = |r|^(m-1) r``; porous medium for m > 1, fast diffusion for m < 1.

    For m < 1 phi is not locally Lipschitz at 0 (``phi'(0) = inf``). It is
    still admissible; the resolvent solver handles it through :meth:`split`.
    """

    kind = "power"

    def __init__(self, m: float):
        m = float(m)
        if not m > 0 or not math.isfinite(m):
            raise ValueError("exponent m must be positive")
        self.m = m
        self.locally_lipschitz = m >= 1.0

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        return np.sign(r) * np.abs(r) ** self.m

    def inverse(self, s):
        s = np.asarray(s, dtype=float)
        return np.sign(s) * np.abs(s) ** (1.0 / self.m)

    def derivative(self, r):
        a = np.abs(np.asarray(r, dtype=float))
        if self.m == 1.0:
            return np.ones_like(a)
        with np.errstate(divide="ignore"):
            return self.m * a ** (self.m - 1.0)

    def dual_primitive(self, s):
        a = np.abs(np.asarray(s, dtype=float))
        m = self.m
        return m / (m + 1.0) * a ** ((m + 1.0) / m)

    def split(self, s):
        s = np.asarray(s, dtype=float)
        sg, t = np.sign(s), np.abs(s)
        m = self.m
        if m >= 1.0:
            x = _solve_x_plus_power(t, m)
            u = sg * x
            w = sg * x**m
            d = m * x ** (m - 1.0) if m != 1.0 else np.ones_like(x)
            du = 1.0 / (1.0 + d)
            dw = d / (1.0 + d)
        else:
            y = _solve_x_plus_power(t, 1.0 / m)
            w = sg * y
            u = sg * y ** (1.0 / m)
            # q = (phi^{-1})'(w), finite because 1/m > 1
            q = (1.0 / m) * y ** (1.0 / m - 1.0)
            du = q / (1.0 + q)
            dw = 1.0 / (1.0 + q)
        return u, w, du, dw

    def to_config(self):
        return {"kind": "power", "m": self.m}


class Identity(PowerLaw):
    kind = "identity"

    def __init__(self):
        super().__init__(1.0)

    def __call__(self, r):
        return np.array(r, dtype=float)

    def inverse(self, s):
        return np.array(s, dtype=float)

    def split(self, s):
        s = np.asarray(s, dtype=float)
        half = 0.5 * s
        return half, half.copy(), np.full_like(s, 0.5), np.full_like(s, 0.5)

    def to_config(self):
        return {"kind": "identity"}


class _PiecewiseLinearMap:
    """Increasing piecewise linear map through the origin, with inverse.

    0 is inserted as a breakpoint and every piece is anchored at its end
    nearer to 0, so the map is exactly ``slope * r`` next to the origin
    and keeps full relative accuracy for tiny arguments.
    """

    def __init__(self, breakpoints, slopes):
        b = np.asarray(breakpoints, dtype=float)
        sl = np.asarray(slopes, dtype=float)
        if not np.any(b == 0.0):
            k = int(np.searchsorted(b, 0.0))
            b = np.insert(b, k, 0.0)
            sl = np.insert(sl, k, sl[k])
        self.b, self.sl = b, sl
        z = int(np.flatnonzero(b == 0.0)[0])
        vals = np.zeros(b.size)
        for i in range(z + 1, b.size):
            vals[i] = vals[i - 1] + sl[i] * (b[i] - b[i - 1])
        for i in range(z - 1, -1, -1):
            vals[i] = vals[i + 1] - sl[i + 1] * (b[i + 1] - b[i])
        self.vals = vals  # map values at the breakpoints

    @staticmethod
    def _eval(x, knots, values):
        k = np.searchsorted(knots, x, side="right")
        # anchor: left knot for x >= 0, right knot for x < 0
        a = np.where(x >= 0, np.maximum(k - 1, 0), np.minimum(k, knots.size - 1))
        return values[a], knots[a], k

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        v, anchor, k = self._eval(r, self.b, self.vals)
        return v + self.sl[k] * (r - anchor)

    def slope(self, r):
        return self.sl[np.searchsorted(self.b, np.asarray(r, dtype=float), side="right")]

    def inverse(self, s):
        s = np.asarray(s, dtype=float)
        v, anchor, k = self._eval(s, self.vals, self.b)
        return v + (s - anchor) / self.sl[k]


class PiecewiseLinear(Nonlinearity):
    """Continuous piecewise linear phi with positive slopes.

    ``slopes[k]`` applies between ``breakpoints[k-1]`` and
    ``breakpoints[k]``; ``slopes[0]`` left of the first breakpoint and
    ``slopes[-1]`` right of the last. phi is anchored by ``phi(0) = 0``.
    """

    kind = "piecewise"

    def __init__(self, breakpoints, slopes):
        b = np.asarray(breakpoints, dtype=float).ravel()
        sl = np.asarray(slopes, dtype=float).ravel()
        if b.size == 0:
            raise ValueError("need at least one breakpoint")
        if sl.size != b.size + 1:
            raise ValueError("need len(slopes) == len(breakpoints) + 1")
        if np.any(np.diff(b) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        if np.any(sl <= 0) or not np.all(np.isfinite(sl)):
            raise ValueError("slopes must be positive and finite")
        self.breakpoints, self.slopes = b, sl
        self._phi = _PiecewiseLinearMap(b, sl)
        self._shifted = _PiecewiseLinearMap(b, sl + 1.0)  # u -> u + phi(u)

    def __call__(self, r):
        return self._phi(r)

    def inverse(self, s):
        return self._phi.inverse(s)

    def derivative(self, r):
        return self._phi.slope(r)

    def dual_primitive(self, s):
        # phi^{-1} is piecewise linear, so the trapezoid rule over its kinks is exact
        s = np.asarray(s, dtype=float)
        kinks = self._phi.vals
        out = np.empty(s.shape)
        for idx, x in np.ndenumerate(s):
            inside = kinks[(kinks > min(0.0, x)) & (kinks < max(0.0, x))]
            pts = np.sort(np.concatenate([[0.0, x], inside]))
            val = integrate.trapezoid(self.inverse(pts), pts)
            out[idx] = val if x >= 0 else -val
        return out

    def split(self, s):
        u = self._shifted.inverse(s)
        w = self._phi(u)
        d = self._phi.slope(u)
        return u, w, 1.0 / (1.0 + d), d / (1.0 + d)

    def to_config(self):
        return {"kind": "piecewise", "breakpoints": self.breakpoints.tolist(), "slopes": self.slopes.tolist()}


class Custom(Nonlinearity):
    """User supplied phi. Guarantees are taken on trust from the caller.

    Missing pieces are computed numerically: the inverse and the split by
    bracketed bisection, ``Psi`` by adaptive quadrature (tolerance 1e-12),
    and ``phi'`` by central differences.
    """

    kind = "custom"

    def __init__(self, func: Callable, derivative: Callable | None = None, inverse: Callable | None = None,
                 metadata: dict | None = None, **guarantees):
        self.func = func
        self._derivative = derivative
        self._inverse = inverse
        self.metadata = dict(metadata or {})
        for k, v in guarantees.items():
            if k not in self.guarantees():
                raise TypeError(f"unknown guarantee {k!r}")
            setattr(self, k, bool(v))

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        out = np.vectorize(lambda x: float(self.func(x)), otypes=[float])(r)
        return np.where(r == 0.0, 0.0, out)

    def derivative(self, r):
        r = np.asarray(r, dtype=float)
        if self._derivative is not None:
            return np.vectorize(lambda x: float(self._derivative(x)), otypes=[float])(r)
        step = 1e-6 * np.maximum(1.0, np.abs(r))
        return (self(r + step) - self(r - step)) / (2 * step)

    def inverse(self, s):
        s = np.asarray(s, dtype=float)
        if self._inverse is not None:
            return np.vectorize(lambda x: float(self._inverse(x)), otypes=[float])(s)
        width = np.maximum(1.0, np.abs(s))
        dg = self.derivative if self._derivative is not None else None
        return _bracket_solve(self, s, -width, width, dg=dg)

    def dual_primitive(self, s):
        s = np.asarray(s, dtype=float)
        out = np.empty(s.shape)
        for idx, x in np.ndenumerate(s):
            if x == 0.0:
                out[idx] = 0.0
                continue
            val, err = integrate.quad(lambda t: float(self.inverse(t)), 0.0, float(x),
                                      epsabs=1e-12, epsrel=1e-12, limit=200)
            if not math.isfinite(val) or err > 1e-9 * max(1.0, abs(val)):
                raise NumericalError(f"quadrature for Psi({x}) did not converge (error {err:.2e})")
            out[idx] = val
        return out

    def split(self, s):
        s = np.asarray(s, dtype=float)
        width = np.maximum(1.0, np.abs(s))
        u = _bracket_solve(lambda x: x + self(x), s, -width, width)
        w = self(u)
        d = self.derivative(u)
        d = np.where(np.isfinite(d), d, np.inf)
        with np.errstate(invalid="ignore"):
            du = 1.0 / (1.0 + d)
            dw = np.where(np.isinf(d), 1.0, d / (1.0 + d))
        return u, w, du, dw

    def to_config(self):
        return {"kind": "custom", **self.metadata}


def from_config(cfg: dict) -> Nonlinearity:
    """Build a nonlinearity from ``{"kind": "power", "m": 3}`` and friends."""
    kind = str(cfg.get("kind", "")).lower()
    if kind in ("power", "powerlaw"):
        if "m" not in cfg:
            raise ConfigError("power nonlinearity needs 'm'")
        return PowerLaw(cfg["m"])
    if kind == "identity":
        return Identity()
    if kind in ("piecewise", "piecewise_linear"):
        return PiecewiseLinear(cfg["breakpoints"], cfg["slopes"])
    raise ConfigError(f"unknown nonlinearity kind {cfg.get('kind')!r}")


# -- functional surface ----------------------------------------------------

def phi_eval(phi: Nonlinearity, r):
    out = phi(r)
    return float(out) if np.ndim(out) == 0 else out


def phi_inverse(phi: Nonlinearity, s):
    out = phi.inverse(s)
    return float(out) if np.ndim(out) == 0 else out


def dual_primitive(phi: Nonlinearity, s):
    out = phi.dual_primitive(s)
    return float(out) if np.ndim(out) == 0 else out


def yosida_resolvent(phi: Nonlinearity, lam: float, r):
    """The point ``x`` with ``x + lam * phi^{-1}(x) = r``.

    ``g(x) = x + lam phi^{-1}(x)`` is a continuous increasing bijection
    with ``g(0) = 0`` and ``|g(x)| >= |x|``, so the root is unique and
    lies between 0 and ``r``; that interval is the bracket.
    """
    if not lam > 0:
        raise ValueError("lambda must be positive")
    r_arr = np.asarray(r, dtype=float)
    g = lambda x: x + lam * phi.inverse(x)  # noqa: E731

    def dg(x):
        with np.errstate(divide="ignore"):
            return 1.0 + lam / phi.derivative(phi.inverse(x))

    x = _bracket_solve(g, r_arr, np.minimum(r_arr, 0.0), np.maximum(r_arr, 0.0), dg=dg, expand=False)
    # exact sign agreement; g(0) = 0 so the bisection result can only miss it by rounding
    x = np.where(r_arr == 0.0, 0.0, x)
    x = np.where(np.sign(x) * np.sign(r_arr) < 0, 0.0, x)
    resid = np.abs(g(x) - r_arr)
    if np.any(~np.isfinite(resid)):
        raise NonConvergenceError("Yosida resolvent did not converge", best=x, residual=float(np.nanmax(resid)))
    return float(x) if x.ndim == 0 else x


def yosida_operator(phi: Nonlinearity, lam: float, r):
    """``[phi^{-1}]_lam(r) = (r - x) / lam`` with ``x`` the Yosida resolvent.

    Evaluated as ``phi^{-1}(x)``, which equals ``(r - x)/lam`` by the
    defining equation and avoids cancellation for small ``lam``.
    """
    x = yosida_resolvent(phi, lam, r)
    out = phi.inverse(x)
    return float(out) if np.ndim(out) == 0 else out


def sign0(r):
    """Restricted signum: 1, 0 or -1."""
    out = np.sign(np.asarray(r, dtype=float))
    return float(out) if out.ndim == 0 else out


def gamma_eps(eps: float, r):
    """Lipschitz approximation of sign0: ``clip(r / eps, -1, 1)``."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    out = np.clip(np.asarray(r, dtype=float) / eps, -1.0, 1.0)
    return float(out) if out.ndim == 0 else out


# -- test-function families ------------------------------------------------

J0_TAGS = ("Abs", "Square", "ShiftedPos", "ShiftedNeg", "HingedAbs")
P0_TAGS = ("HardClamp", "SmoothClamp")
THRESHOLD_RANGE = (0.01, 10.0)


@dataclass(frozen=True)
class TestFunctionJ0:
    """Convex ``j >= 0`` with ``j(0) = 0``.

    ShiftedPos(k) is ``(s-k)+``, ShiftedNeg(k) is ``(-s-k)+`` and
    HingedAbs(k) is ``(|s|-k)+``.
    """

    __test__ = False  # not a pytest class

    tag: str
    k: float = 0.0

    def __post_init__(self):
        if self.tag not in J0_TAGS:
            raise ValueError(f"unknown j tag {self.tag!r}")
        if self.k < 0:
            raise ValueError("threshold must be nonnegative")

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        if self.tag == "Abs":
            return np.abs(s)
        if self.tag == "Square":
            return s * s
        if self.tag == "ShiftedPos":
            return np.maximum(s - self.k, 0.0)
        if self.tag == "ShiftedNeg":
            return np.maximum(-s - self.k, 0.0)
        return np.maximum(np.abs(s) - self.k, 0.0)

    def describe(self) -> str:
        return self.tag if self.tag in ("Abs", "Square") else f"{self.tag}({self.k!r})"


@dataclass(frozen=True)
class TruncationP0:
    """``T(0) = 0``, ``0 <= T' <= 1`` with compact support.

    HardClamp(k) clips to ``[-k, k]``. SmoothClamp(k, eps) has ``T' = 1``
    on ``[-k, k]`` falling linearly to 0 at ``|s| = k + eps``.
    """

    tag: str
    k: float
    eps: float = 0.0

    def __post_init__(self):
        if self.tag not in P0_TAGS:
            raise ValueError(f"unknown T tag {self.tag!r}")
        if self.k < 0 or self.eps < 0:
            raise ValueError("k and eps must be nonnegative")
        if self.tag == "SmoothClamp" and self.eps == 0:
            raise ValueError("SmoothClamp needs eps > 0")

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        if self.tag == "HardClamp":
            return np.clip(s, -self.k, self.k)
        a = np.abs(s)
        t = np.clip(a - self.k, 0.0, self.eps)
        mag = np.minimum(a, self.k) + t - t * t / (2 * self.eps)
        return np.sign(s) * mag

    def derivative(self, s):
        a = np.abs(np.asarray(s, dtype=float))
        if self.tag == "HardClamp":
            return (a < self.k).astype(float)
        return np.clip((self.k + self.eps - a) / self.eps, 0.0, 1.0)

    def describe(self) -> str:
        if self.tag == "HardClamp":
            return f"HardClamp({self.k!r})"
        return f"SmoothClamp({self.k!r}, {self.eps!r})"


def _log_uniform(rng, lo, hi):
    return float(np.exp(rng.uniform(np.log(lo), np.log(hi))))


def sample_J0(seed, count: int) -> list[TestFunctionJ0]:
    """Deterministic family: Abs, Square, then random thresholded members.

    Thresholds are log-uniform on ``[0.01, 10]``.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    rng = np.random.default_rng(seed)
    out = [TestFunctionJ0("Abs"), TestFunctionJ0("Square")][:count]
    while len(out) < count:
        tag = J0_TAGS[2 + int(rng.integers(3))]
        out.append(TestFunctionJ0(tag, _log_uniform(rng, *THRESHOLD_RANGE)))
    return out


def sample_P0(seed, count: int) -> list[TruncationP0]:
    """Deterministic family starting with HardClamp(1).

    Clamp levels are log-uniform on ``[0.01, 10]``; SmoothClamp ramps are
    log-uniform on ``[0.01, 1]``.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    rng = np.random.default_rng(seed)
    out = [TruncationP0("HardClamp", 1.0)]
    while len(out) < count:
        k = _log_uniform(rng, *THRESHOLD_RANGE)
        if rng.random() < 0.5:
            out.append(TruncationP0("HardClamp", k))
        else:
            out.append(TruncationP0("SmoothClamp", k, _log_uniform(rng, 0.01, 1.0)))
    return out
