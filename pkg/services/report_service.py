from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Any

import numpy as np

from models.report import ExperimentReport, ReportTable


class ReportNotFoundError(FileNotFoundError):
    pass


def _cell(value: Any) -> str:
    # repr keeps floats bit-exact when read back
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (complex, np.complexfloating)):
        return repr(complex(value))
    return str(value)


class ReportService:
    def __init__(self, reports_dir: Path):
        self.reports_dir = reports_dir
        self.reports_dir.mkdir(parents=True, exist_ok=True)

    def default_dir(self, command: str) -> Path:
        return self.reports_dir / command

    def _report_file(self, report_dir: Path) -> Path:
        return report_dir / "report.json"

    def _tables_dir(self, report_dir: Path) -> Path:
        return report_dir / "tables"

    def exists(self, report_dir: Path) -> bool:
        return self._report_file(report_dir).exists()

    def save_report(self, report: ExperimentReport, report_dir: Path) -> Path:
        report_dir.mkdir(parents=True, exist_ok=True)
        report_file = self._report_file(report_dir)
        with report_file.open("w", encoding="utf-8") as f:
            json.dump(report.model_dump(mode="json"), f, ensure_ascii=False, indent=2, sort_keys=True)
            f.write("\n")
        for table in report.tables:
            self.write_table(table, report_dir)
        return report_file

    def load_report(self, report_dir: Path) -> ExperimentReport:
        report_file = self._report_file(report_dir)
        if not report_file.exists():
            raise ReportNotFoundError(f"Report '{report_dir}' not found")
        with report_file.open("r", encoding="utf-8") as f:
            payload = json.load(f)
        return ExperimentReport.model_validate(payload)

    def write_table(self, table: ReportTable, report_dir: Path) -> Path:
        tables_dir = self._tables_dir(report_dir)
        tables_dir.mkdir(parents=True, exist_ok=True)
        path = tables_dir / f"{table.name}.csv"
        with path.open("w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(table.columns)
            for row in table.rows:
                writer.writerow([_cell(value) for value in row])
        return path

    def read_table(self, report_dir: Path, name: str) -> list[dict[str, str]]:
        path = self._tables_dir(report_dir) / f"{name}.csv"
        if not path.exists():
            raise ReportNotFoundError(f"Table '{name}' not found in '{report_dir}'")
        with path.open("r", encoding="utf-8", newline="") as f:
            return list(csv.DictReader(f))

    def list_reports(self) -> list[str]:
        return sorted(p.name for p in self.reports_dir.iterdir() if p.is_dir() and self.exists(p))

    def report_summary(self, report_dir: Path) -> dict[str, Any]:
        report = self.load_report(report_dir)
        return {
            "command": report.command,
            "n": report.provenance.n,
            "seed": report.provenance.seed,
            "passed": report.passed,
            "checks": {check.name: check.passed for check in report.checks},
            "failed": [check.name for check in report.failed_checks],
            "tables": [table.name for table in report.tables],
            "generated_at": report.metadata.get("generated_at"),
        }
