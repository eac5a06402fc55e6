#!/usr/bin/env python3
from __future__ import annotations

import argparse
import json
from pathlib import Path


def main() -> int:
    parser = argparse.ArgumentParser(description="Show a harmonic lab report")
    parser.add_argument("report_dir", help="Directory holding report.json")
    parser.add_argument(
        "--full",
        action="store_true",
        help="Print full JSON instead of summary",
    )
    args = parser.parse_args()

    report_path = Path(args.report_dir) / "report.json"
    if not report_path.exists():
        raise SystemExit(f"Report file not found: {report_path}")

    payload = json.loads(report_path.read_text(encoding="utf-8"))
    if args.full:
        print(json.dumps(payload, ensure_ascii=False, indent=2))
        return 0

    checks = payload.get("checks", [])
    summary = {
        "command": payload.get("command"),
        "n": payload.get("provenance", {}).get("n"),
        "seed": payload.get("provenance", {}).get("seed"),
        "passed": all(check.get("passed") for check in checks),
        "failed_checks": [check.get("name") for check in checks if not check.get("passed")],
        "results": sorted(payload.get("results", {})),
        "tables": [table.get("name") for table in payload.get("tables", [])],
        "generated_at": payload.get("metadata", {}).get("generated_at"),
    }
    print(json.dumps(summary, ensure_ascii=False, indent=2))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
