from __future__ import annotations

from datetime import datetime, timezone
from typing import Any

from pydantic import BaseModel, ConfigDict, Field


def utc_now() -> datetime:
    return datetime.now(timezone.utc)


class CheckResult(BaseModel):
    """One acceptance check: ``value`` compared against ``tolerance``."""

    model_config = ConfigDict(extra="ignore")

    name: str
    value: float
    tolerance: float
    passed: bool
    detail: str = ""


class Provenance(BaseModel):
    model_config = ConfigDict(extra="ignore")

    command: str
    n: int
    seed: int
    config: dict[str, Any] = Field(default_factory=dict)


class ReportTable(BaseModel):
    model_config = ConfigDict(extra="ignore")

    name: str
    columns: list[str]
    rows: list[list[Any]] = Field(default_factory=list)


class ExperimentReport(BaseModel):
    """Everything a command produces; only ``metadata`` may differ between identical reruns."""

    model_config = ConfigDict(extra="ignore")

    command: str
    provenance: Provenance
    results: dict[str, Any] = Field(default_factory=dict)
    checks: list[CheckResult] = Field(default_factory=list)
    tables: list[ReportTable] = Field(default_factory=list)
    metadata: dict[str, str] = Field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    @property
    def failed_checks(self) -> list[CheckResult]:
        return [check for check in self.checks if not check.passed]

    def table(self, name: str) -> ReportTable | None:
        return next((table for table in self.tables if table.name == name), None)

    def stamp(self) -> ExperimentReport:
        self.metadata["generated_at"] = utc_now().isoformat()
        return self
