"""Check results and audit reports.

Reports serialize to JSON with sorted keys and ``repr`` floats, so two runs
with the same seed produce byte-identical files.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

SCHEMA_VERSION = "1.0"


def clean(obj):
    """Make ``obj`` JSON safe: numpy scalars/arrays to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    return obj


def dumps(obj) -> str:
    return json.dumps(clean(obj), sort_keys=True, indent=1) + "\n"


@dataclass
class CheckResult:
    """Outcome of one sampled check.

    ``passed`` holds iff ``worst_margin >= -tolerance``; a failing check
    always carries a ``witness``. Skipped checks (not applicable to the
    configured energy) are neither passed nor failed.
    """

    name: str
    passed: bool
    worst_margin: float
    tolerance: float
    samples_run: int
    witness: dict | None = None
    note: str = ""
    skipped: bool = False
    error: str | None = None

    @classmethod
    def from_margins(cls, name, margins, witnesses, tolerance, note=""):
        """Build a result from per-sample margins and lazily built witnesses."""
        margins = np.asarray(margins, dtype=float)
        if margins.size == 0:
            return cls(name, True, math.inf, tolerance, 0, note=note)
        bad = ~np.isfinite(margins)
        k = int(np.argmax(bad)) if bad.any() else int(np.argmin(margins))
        worst = float(margins[k]) if not bad.any() else -math.inf
        passed = bool(worst >= -tolerance)
        witness = witnesses(k) if callable(witnesses) else witnesses[k]
        return cls(name, passed, worst, tolerance, int(margins.size), witness, note)

    @classmethod
    def skip(cls, name, note):
        return cls(name, True, math.inf, 0.0, 0, note=note, skipped=True)

    @classmethod
    def crashed(cls, name, exc, tolerance=0.0):
        return cls(name, False, -math.inf, tolerance, 0, {"exception": type(exc).__name__},
                   error=f"{type(exc).__name__}: {exc}")

    def to_dict(self):
        return {
            "name": self.name,
            "pass": self.passed,
            "worst_margin": self.worst_margin,
            "tolerance": self.tolerance,
            "samples_run": self.samples_run,
            "witness": self.witness,
            "note": self.note,
            "skipped": self.skipped,
            "error": self.error,
        }

    def line(self) -> str:
        status = "SKIP" if self.skipped else ("PASS" if self.passed else "FAIL")
        return f"{status:4s} {self.name:28s} worst_margin={self.worst_margin:+.3e} samples={self.samples_run}"


@dataclass
class AuditReport:
    checks: list[CheckResult] = field(default_factory=list)
    config_echo: dict = field(default_factory=dict)
    header: list[str] = field(default_factory=list)
    schema_version: str = SCHEMA_VERSION

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks if not c.skipped)

    def failed(self) -> list[str]:
        return [c.name for c in self.checks if not c.skipped and not c.passed]

    def get(self, name: str) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def extend(self, other: AuditReport):
        self.checks.extend(other.checks)
        for h in other.header:
            if h not in self.header:
                self.header.append(h)

    def to_dict(self):
        return {
            "schema_version": self.schema_version,
            "header": list(self.header),
            "config_echo": self.config_echo,
            "passed": self.passed,
            "checks": [c.to_dict() for c in self.checks],
        }

    def to_json(self) -> str:
        return dumps(self.to_dict())

    def summary(self) -> str:
        return "\n".join(c.line() for c in self.checks)
