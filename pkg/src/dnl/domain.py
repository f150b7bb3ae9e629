"""Finite discrete measure spaces.

A :class:`DiscreteDomain` is a weighted graph whose nodes carry a positive
mass ``mu``. Nodes flagged in ``boundary`` are homogeneous Dirichlet nodes:
every solver pins them to zero, so energies never have to know about
boundary conditions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionError


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class DiscreteDomain:
    """Finite weighted graph with per-node measure.

    Parameters
    ----------
    measure : (n,) array
        Node masses, all strictly positive.
    edges : (k, 3) array-like
        Undirected edges ``(i, j, w)`` with ``w > 0``, each stored once.
    boundary : (n,) bool array
        True marks a Dirichlet node whose value is pinned to 0.
    coords : (n,) array, optional
        Node positions, set by the 1D grid builder. Needed by the
        1D Leray-Lions energy.
    """

    measure: np.ndarray
    edge_i: np.ndarray
    edge_j: np.ndarray
    edge_w: np.ndarray
    boundary: np.ndarray
    coords: np.ndarray | None = None

    def __init__(self, measure, edges, boundary=None, coords=None):
        mu = _frozen(measure)
        n = mu.size
        if mu.ndim != 1 or n == 0:
            raise ValueError("measure must be a nonempty 1D array")
        if not np.all(np.isfinite(mu)) or np.any(mu <= 0):
            raise ValueError("all node masses must be finite and positive")

        edges = list(edges)
        if edges:
            arr = np.array(edges, dtype=float).reshape(-1, 3)
            ei = arr[:, 0].astype(np.int64)
            ej = arr[:, 1].astype(np.int64)
            ew = arr[:, 2]
            if np.any(arr[:, 0] != ei) or np.any(arr[:, 1] != ej):
                raise ValueError("edge endpoints must be integers")
        else:
            ei = ej = np.zeros(0, dtype=np.int64)
            ew = np.zeros(0)
        if np.any((ei < 0) | (ei >= n) | (ej < 0) | (ej >= n)):
            raise ValueError("edge endpoint out of range")
        if np.any(ei == ej):
            raise ValueError("self-loops are not allowed")
        if not np.all(np.isfinite(ew)) or np.any(ew <= 0):
            raise ValueError("edge weights must be finite and positive")
        keys = set()
        for a, b in zip(ei.tolist(), ej.tolist()):
            key = (min(a, b), max(a, b))
            if key in keys:
                raise ValueError(f"edge {key} stored twice")
            keys.add(key)

        if boundary is None:
            bmask = np.zeros(n, dtype=bool)
        else:
            bmask = np.array(boundary, dtype=bool)
            if bmask.shape != (n,):
                raise DimensionError("boundary mask length differs from node count")
        if bmask.all():
            raise ValueError("domain needs at least one non-boundary node")

        object.__setattr__(self, "measure", mu)
        object.__setattr__(self, "edge_i", _frozen(ei, np.int64))
        object.__setattr__(self, "edge_j", _frozen(ej, np.int64))
        object.__setattr__(self, "edge_w", _frozen(ew))
        object.__setattr__(self, "boundary", _frozen(bmask, bool))
        if coords is not None:
            coords = _frozen(coords)
            if coords.shape != (n,):
                raise DimensionError("coords length differs from node count")
        object.__setattr__(self, "coords", coords)

    @property
    def node_count(self) -> int:
        return self.measure.size

    @property
    def edge_count(self) -> int:
        return self.edge_w.size

    @property
    def free(self) -> np.ndarray:
        """Indices of the non-boundary nodes."""
        return np.flatnonzero(~self.boundary)

    @property
    def edges(self) -> list[tuple[int, int, float]]:
        return [(int(i), int(j), float(w)) for i, j, w in zip(self.edge_i, self.edge_j, self.edge_w)]

    def check(self, u) -> np.ndarray:
        """Return ``u`` as a float array, raising on a length mismatch."""
        u = np.asarray(u, dtype=float)
        if u.shape != (self.node_count,):
            raise DimensionError(f"expected {self.node_count} node values, got shape {u.shape}")
        return u

    def pin(self, u) -> np.ndarray:
        """Copy of ``u`` with boundary entries set to exactly 0."""
        u = self.check(u).copy()
        u[self.boundary] = 0.0
        return u

    def to_json(self) -> dict:
        out = {
            "nodes": self.measure.tolist(),
            "edges": [list(e) for e in self.edges],
            "boundary": np.flatnonzero(self.boundary).tolist(),
        }
        if self.coords is not None:
            out["coords"] = self.coords.tolist()
        return out

    @classmethod
    def from_json(cls, data: dict) -> DiscreteDomain:
        n = len(data["nodes"])
        mask = np.zeros(n, dtype=bool)
        mask[np.asarray(data.get("boundary", []), dtype=np.int64)] = True
        return cls(data["nodes"], data.get("edges", []), mask, data.get("coords"))


def load_domain(path) -> DiscreteDomain:
    return DiscreteDomain.from_json(json.loads(Path(path).read_text()))


def save_domain(dom: DiscreteDomain, path) -> None:
    Path(path).write_text(json.dumps(dom.to_json(), indent=1))


def integrate(dom: DiscreteDomain, u) -> float:
    """Integral of ``u`` against the node measure, ``sum_i mu_i u_i``."""
    return float(np.dot(dom.measure, dom.check(u)))


def inner(dom: DiscreteDomain, u, v) -> float:
    """The L2(mu) pairing."""
    return float(np.dot(dom.measure, dom.check(u) * dom.check(v)))


def norm(dom: DiscreteDomain, u, which: str = "L2") -> float:
    """L1, L2 (both mu-weighted) or Linf norm of a node function.

    Linf is the plain maximum: on a finite space with positive masses the
    essential supremum ignores the measure.
    """
    u = dom.check(u)
    key = which.upper()
    if key == "L1":
        return float(np.dot(dom.measure, np.abs(u)))
    if key == "L2":
        return float(np.sqrt(np.dot(dom.measure, u * u)))
    if key in ("LINF", "INF"):
        return float(np.max(np.abs(u))) if u.size else 0.0
    raise ValueError(f"unknown norm {which!r}")


def positive_part(u) -> np.ndarray:
    return np.maximum(np.asarray(u, dtype=float), 0.0)


def negative_part(u) -> np.ndarray:
    """``min(u, 0)``; note the sign convention keeps ``u = u+ + u-``."""
    return np.minimum(np.asarray(u, dtype=float), 0.0)


def build_path_grid(n_interior: int, h: float) -> DiscreteDomain:
    """Uniform 1D grid on ``[0, (n_interior + 1) h]`` with Dirichlet ends.

    Node masses are ``h`` and edge weights ``1/h``, so that for p = 2 the
    graph energy ``(1/2) sum w |u_i - u_j|^2`` equals the finite-difference
    Dirichlet energy ``sum h |(u_{k+1} - u_k)/h|^2 / 2``. For other p the
    graph energy keeps the weights ``1/h``; the h-consistent p-energy is the
    1D Leray-Lions energy.
    """
    if int(n_interior) != n_interior or n_interior < 1:
        raise ValueError("n_interior must be a positive integer")
    if not h > 0:
        raise ValueError("h must be positive")
    n = int(n_interior) + 2
    edges = [(k, k + 1, 1.0 / h) for k in range(n - 1)]
    mask = np.zeros(n, dtype=bool)
    mask[[0, -1]] = True
    return DiscreteDomain(np.full(n, float(h)), edges, mask, coords=h * np.arange(n))


def build_grid2d(nx: int, ny: int, h: float) -> DiscreteDomain:
    """Uniform 2D grid, ``nx * ny`` interior nodes surrounded by a Dirichlet ring.

    Five-point connectivity, masses ``h^2`` and unit edge weights (the
    p = 2 finite-difference energy ``sum h^2 |grad u|^2 / 2``).
    """
    if nx < 1 or ny < 1:
        raise ValueError("nx and ny must be positive")
    if not h > 0:
        raise ValueError("h must be positive")
    X, Y = nx + 2, ny + 2
    idx = np.arange(X * Y).reshape(X, Y)
    edges = []
    for a in range(X):
        for b in range(Y):
            if a + 1 < X:
                edges.append((idx[a, b], idx[a + 1, b], 1.0))
            if b + 1 < Y:
                edges.append((idx[a, b], idx[a, b + 1], 1.0))
    mask = np.zeros((X, Y), dtype=bool)
    mask[[0, -1], :] = True
    mask[:, [0, -1]] = True
    return DiscreteDomain(np.full(X * Y, float(h) ** 2), edges, mask.ravel())
