"""JSON configuration: domains, energies and nonlinearities from plain dicts.

A config is a dict with optional keys ``domain``, ``energy``, ``phi``,
``seed`` and module-specific settings. Domain entries take one of the forms

    {"grid1d": {"n": 16, "h": 0.0588}}
    {"grid2d": {"nx": 8, "ny": 8, "h": 0.125}}
    {"file": "graph.json"}
    {"nodes": [...], "edges": [...], "boundary": [...]}
"""

from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path

from .domain import DiscreteDomain, build_grid2d, build_path_grid, load_domain
from .energy import Energy, energy_from_config
from .errors import ConfigError
from .nonlinearity import Nonlinearity, from_config as phi_from_config

DEFAULT_DOMAIN = {"grid1d": {"n": 16, "h": 1.0 / 17}}
DEFAULT_ENERGY = {"kind": "p_dirichlet", "p": 2.0}
DEFAULT_PHI = {"kind": "identity"}


def load_config(path) -> dict:
    try:
        cfg = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return cfg


def merged(base: dict, override: dict | None) -> dict:
    """Deep copy of ``base`` with top-level keys from ``override``."""
    out = copy.deepcopy(base)
    for k, v in (override or {}).items():
        out[k] = copy.deepcopy(v)
    return out


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def build_domain(cfg: dict | None) -> DiscreteDomain:
    cfg = DEFAULT_DOMAIN if cfg is None else cfg
    if "grid1d" in cfg:
        g = cfg["grid1d"]
        n = int(g["n"])
        return build_path_grid(n, float(g.get("h", 1.0 / (n + 1))))
    if "grid2d" in cfg:
        g = cfg["grid2d"]
        return build_grid2d(int(g["nx"]), int(g["ny"]), float(g["h"]))
    if "file" in cfg:
        return load_domain(cfg["file"])
    if "nodes" in cfg:
        return DiscreteDomain.from_json(cfg)
    raise ConfigError(f"cannot build a domain from keys {sorted(cfg)}")


def build_energy(cfg: dict | None, domain: DiscreteDomain) -> Energy:
    return energy_from_config(DEFAULT_ENERGY if cfg is None else cfg, domain)


def build_phi(cfg: dict | None) -> Nonlinearity:
    return phi_from_config(DEFAULT_PHI if cfg is None else cfg)


def build_model(cfg: dict) -> tuple[DiscreteDomain, Energy, Nonlinearity]:
    dom = build_domain(cfg.get("domain"))
    return dom, build_energy(cfg.get("energy"), dom), build_phi(cfg.get("phi"))
