"""Validation report shared by corpus and caption checks."""
from dataclasses import dataclass, field


@dataclass(frozen=True)
class Violation:
    path: str
    message: str

    def __str__(self) -> str:
        return f"{self.path}: {self.message}"


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    def add(self, path: str, message: str) -> None:
        self.violations.append(Violation(path, message))

    def extend(self, other: "ValidationReport") -> None:
        self.violations.extend(other.violations)

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_json_dict(self) -> dict:
        return {
            "ok": self.ok,
            "violations": [{"path": v.path, "message": v.message} for v in self.violations],
        }
