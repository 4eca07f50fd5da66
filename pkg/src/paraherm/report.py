"""Verification reports: named residual checks with tolerances."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Any, Optional

import numpy as np


@dataclass
class Check:
    """One verified identity.

    ``anchor`` states the identity in formula form.  With ``kind="max"`` the
    check passes when the residual is at most ``tol``; with ``kind="min"`` it
    passes when the residual exceeds ``tol`` (used for witnesses that some
    quantity is certifiably nonzero).
    """

    name: str
    anchor: str
    residual: float
    tol: float
    kind: str = "max"
    passed: bool = field(init=False)

    def __post_init__(self):
        self.residual = float(self.residual)
        self.tol = float(self.tol)
        if not np.isfinite(self.residual):
            self.passed = False
        elif self.kind == "max":
            self.passed = self.residual <= self.tol
        elif self.kind == "min":
            self.passed = self.residual > self.tol
        else:
            raise ValueError(f"unknown check kind {self.kind!r}")

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        op = "<=" if self.kind == "max" else ">"
        return f"[{status}] {self.name}: {self.residual:.3e} {op} {self.tol:.0e}  ({self.anchor})"


@dataclass
class Report:
    model: str
    checks: list[Check] = field(default_factory=list)
    values: dict[str, Any] = field(default_factory=dict)
    env: dict[str, Any] = field(default_factory=dict)

    def add(self, name: str, anchor: str, residual: float, tol: float, kind: str = "max") -> Check:
        c = Check(name, anchor, residual, tol, kind)
        self.checks.append(c)
        return c

    def extend(self, other: "Report", prefix: Optional[str] = None) -> "Report":
        for c in other.checks:
            if prefix:
                c = Check(f"{prefix}.{c.name}", c.anchor, c.residual, c.tol, c.kind)
            self.checks.append(c)
        for k, v in other.values.items():
            self.values[f"{prefix}.{k}" if prefix else k] = v
        return self

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]

    def __getitem__(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "passed": self.passed,
            "checks": [asdict(c) for c in self.checks],
            "values": _plain(self.values),
            "env": _plain(self.env),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def text(self) -> str:
        lines = [f"model: {self.model}"]
        lines += ["  " + c.line() for c in self.checks]
        for k, v in self.values.items():
            lines.append(f"  {k} = {_plain(v)}")
        lines.append("  overall: " + ("PASS" if self.passed else "FAIL"))
        return "\n".join(lines)


def _plain(obj):
    """Convert numpy containers to JSON-friendly Python objects."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def max_abs(x) -> float:
    x = np.asarray(x)
    return float(np.max(np.abs(x))) if x.size else 0.0
