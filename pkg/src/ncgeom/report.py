"""Named pass/fail checks with residuals."""

from __future__ import annotations

from dataclasses import dataclass, field

SCHEMA_VERSION = "1.0"


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    residual: float
    info: bool = False  # informational checks never fail a report

    def to_json(self) -> dict:
        return {"check": self.name, "pass": bool(self.passed), "residual": float(self.residual)}


@dataclass
class ValidationReport:
    checks: list = field(default_factory=list)

    def add(self, name, residual, tol=None, passed=None, info=False):
        if passed is None:
            passed = residual <= tol
        self.checks.append(Check(name, bool(passed), float(residual), info))
        return self

    def extend(self, other: "ValidationReport", prefix=""):
        for c in other.checks:
            self.checks.append(Check(prefix + c.name, c.passed, c.residual, c.info))
        return self

    @property
    def passed(self) -> bool:
        return all(c.passed or c.info for c in self.checks)

    def __bool__(self):
        return self.passed

    def __getitem__(self, name) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def __iter__(self):
        return iter(self.checks)

    @property
    def max_residual(self) -> float:
        return max((c.residual for c in self.checks if not c.info), default=0.0)

    def failures(self):
        return [c for c in self.checks if not (c.passed or c.info)]

    def to_json(self) -> list:
        return [c.to_json() for c in self.checks]

    def __str__(self):
        lines = []
        for c in self.checks:
            tag = "info" if c.info else ("pass" if c.passed else "FAIL")
            lines.append(f"  [{tag}] {c.name}: {c.residual:.3e}")
        return "\n".join(lines)
