from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any

from pydantic import ValidationError

from config import get_settings
from harmonic.errors import LabError
from models.run_config import COMMANDS, RunConfig
from services.bitmap_io import BitmapFormatError
from services.pipeline import ExperimentPipeline
from services.report_service import ReportService

logger = logging.getLogger("harmonic.cli")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CHECKS_FAILED = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    # SUPPRESS keeps absent flags out of the namespace so the config file can supply them
    parser = _Parser(
        prog="harmonic-lab",
        description="Numerical experiments for bilinear singular operators on the torus",
        argument_default=argparse.SUPPRESS,
    )
    parser.add_argument("--command", choices=COMMANDS, help="Experiment to run")
    parser.add_argument("--config", help="JSON file with RunConfig keys; flags override it")
    parser.add_argument("--n", type=int, help="Grid side (power of two)")
    parser.add_argument("--seed", type=int, help="Random seed")
    parser.add_argument("--out", help="Report directory (default: <reports dir>/<command>)")
    parser.add_argument("--max-workers", dest="max_workers", type=int)
    parser.add_argument("--nodes-per-shell", dest="nodes_per_shell", type=int)
    parser.add_argument("--trials", type=int)
    parser.add_argument("--operator")
    parser.add_argument("--sizes", type=int, nargs="+")
    parser.add_argument("--sigmas", type=float, nargs="+")
    parser.add_argument("--kappas", type=int, nargs="+", help="Frequency offsets for --operator domination")
    parser.add_argument("--lambdas", type=float, nargs="+")
    parser.add_argument("--control", action="store_const", const=True, help="Decay fit with the band hypothesis violated")
    parser.add_argument("--epsilons", type=float, nargs="+")
    parser.add_argument("--k0", type=int)
    parser.add_argument("--m-factor", dest="m_factor", type=int)
    parser.add_argument("--max-iter", dest="max_iter", type=int)
    parser.add_argument("--threshold-c", dest="threshold_c", type=float)
    parser.add_argument("--t-min", dest="t_min", type=float)
    parser.add_argument("--bitmap", help="Bitmap file (.pbm/.txt, .json or an image)")
    parser.add_argument("--density", type=float, help="Density of the random bitmap used without --bitmap")
    parser.add_argument("--alpha", type=int)
    parser.add_argument("--beta", type=int)
    parser.add_argument("--lam", type=float)
    parser.add_argument("--r", type=float)
    parser.add_argument("--depth", type=int)
    parser.add_argument("--trees", type=int)
    parser.add_argument("--refinements", type=int, nargs="+")
    parser.add_argument("--form-space-nodes", dest="form_space_nodes", type=int)
    parser.add_argument("--form-t-nodes", dest="form_t_nodes", type=int)
    return parser


def _read_config_file(path: Path) -> dict[str, Any]:
    with path.open("r", encoding="utf-8") as f:
        payload = json.load(f)
    if not isinstance(payload, dict):
        raise ValueError(f"config file {path} must hold a JSON object")
    return payload


def _log_validation_error(exc: ValidationError) -> None:
    for error in exc.errors():
        key = ".".join(str(part) for part in error["loc"]) or "<config>"
        logger.error("Invalid config key '%s': %s", key, error["msg"])


def main(argv: list[str] | None = None) -> int:
    settings = get_settings()
    logging.basicConfig(
        level=getattr(logging, settings.log_level),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    flags = vars(build_parser().parse_args(argv))
    config_path = flags.pop("config", None)

    try:
        file_data = _read_config_file(Path(config_path)) if config_path else None
        config = RunConfig.resolve(settings.run_defaults(), file_data, flags)
    except ValidationError as exc:
        _log_validation_error(exc)
        return EXIT_USAGE
    except (OSError, ValueError) as exc:
        logger.error("Cannot read config: %s", exc)
        return EXIT_USAGE

    pipeline = ExperimentPipeline(ReportService(settings.reports_dir))
    try:
        report, path = pipeline.execute(config)
    except (LabError, BitmapFormatError, FileNotFoundError) as exc:
        logger.error("%s failed: %s", config.command, exc)
        return EXIT_USAGE
    except Exception:
        logger.exception("%s failed unexpectedly", config.command)
        return EXIT_USAGE

    if not report.passed:
        logger.warning("%s: %d check(s) failed, see %s", config.command, len(report.failed_checks), path)
        return EXIT_CHECKS_FAILED
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
