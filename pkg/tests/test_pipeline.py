from __future__ import annotations

import numpy as np
import pytest

from harmonic.errors import BandError
from harmonic.patterns import BitmapSet
from models.run_config import RunConfig
from services.bitmap_io import save_bitmap
from services.pipeline import ExperimentPipeline
from services.report_service import ReportService


def _pipeline(tmp_path) -> ExperimentPipeline:
    return ExperimentPipeline(ReportService(tmp_path / "reports"))


def _comparable(report) -> dict:
    payload = report.model_dump(mode="json")
    payload.pop("metadata")
    return payload


def test_identity_suite_passes(tmp_path) -> None:
    report = _pipeline(tmp_path).run(RunConfig(command="identity-suite", n=16, seed=3))
    assert report.passed, [check.name for check in report.failed_checks]
    names = {check.name for check in report.checks}
    assert {"round_trip", "parseval", "lp_telescoping", "autocorrelation_sides", "sharp_window_count"} <= names
    assert "sharp_flat_energy" in names
    assert report.table("identities") is not None


def test_reports_are_deterministic(tmp_path) -> None:
    pipeline = _pipeline(tmp_path)
    config = RunConfig(command="lower-bound-sweep", n=8, trials=3, seed=5)
    first = pipeline.run(config)
    second = pipeline.run(config.model_copy(update={"max_workers": 3}))
    assert _comparable(first) == _comparable(second)
    assert "max_workers" not in first.provenance.config
    assert first.passed
    assert first.results["violations"] == 0


def test_execute_writes_report_and_tables(tmp_path) -> None:
    pipeline = _pipeline(tmp_path)
    out = tmp_path / "custom"
    report, path = pipeline.execute(RunConfig(command="lower-bound-sweep", n=8, trials=2, out=str(out)))
    assert path == out / "report.json"
    assert "generated_at" in report.metadata
    loaded = pipeline.report_service.load_report(out)
    assert _comparable(loaded) == _comparable(report)
    rows = pipeline.report_service.read_table(out, "lower_bound")
    assert rows[0]["n"] == "8" and rows[0]["violations"] == "0"


def test_pattern_search_with_bitmap_file(tmp_path) -> None:
    cells = np.zeros((8, 8), dtype=bool)
    cells[1, 2] = cells[7, 2] = cells[1, 6] = True
    bitmap = save_bitmap(BitmapSet(8, cells), tmp_path / "corner.pbm")
    report = _pipeline(tmp_path).run(RunConfig(command="pattern-search", n=8, bitmap=str(bitmap), t_min=0.25))
    assert report.passed
    triple = report.results["triple"]
    assert triple == {"x": 1, "y": 2, "t": 0.75, "dx": 6, "dy": 4}
    assert {check.name for check in report.checks} == {"count_consistency", "triple_verified"}
    assert report.results["count"] > 0


def test_pattern_search_on_random_bitmap(tmp_path) -> None:
    report = _pipeline(tmp_path).run(RunConfig(command="pattern-search", n=16, density=0.5))
    assert report.passed
    assert report.results["n"] == 16


def test_dichotomy_respects_energy_bound(tmp_path) -> None:
    report = _pipeline(tmp_path).run(RunConfig(command="dichotomy", n=32, density=0.4, max_iter=3))
    assert report.passed
    assert report.results["energy"] <= report.results["energy_bound"]
    assert len(report.table("dichotomy").rows) == len(report.results["branches"])


def test_decay_fit_control(tmp_path) -> None:
    config = RunConfig(command="decay-fit", n=16, lambdas=[1.0, 2.0], trials=10, control=True)
    report = _pipeline(tmp_path).run(config)
    assert report.command == "decay-fit"
    assert report.passed
    assert report.provenance.config["control"] is True
    assert report.results["band1"]["mode"] == "mean"
    assert report.results["band2"]["mode"] == "lowpass"
    assert report.results["band2"]["frozen_lambda"] == 1.0


def test_telescope_check(tmp_path) -> None:
    config = RunConfig(command="telescope-check", n=8, trees=2, depth=1, refinements=[1])
    report = _pipeline(tmp_path).run(config)
    assert report.passed, [check.name for check in report.failed_checks]
    assert report.table("telescoping").columns[-2:] == ["relative_x1", "rising"]


def test_sublevel_fit_control_and_monotonicity(tmp_path) -> None:
    config = RunConfig(command="sublevel-fit", n=8, trials=2, epsilons=[0.5, 0.25, 0.125])
    report = _pipeline(tmp_path).run(config)
    checks = {check.name: check for check in report.checks}
    assert checks["control_full_box"].passed
    assert checks["monotone_in_eps"].passed
    assert len(report.table("sublevel_measures").rows) == 2 * 3


def test_norm_estimate_growth_table(tmp_path) -> None:
    config = RunConfig(command="norm-estimate", sizes=[16, 32], trials=2, operator="truncated_t")
    report = _pipeline(tmp_path).run(config)
    assert [row[0] for row in report.table("norms").rows] == [16, 32]
    assert len(report.table("trials").rows) == 4
    assert [check.name for check in report.checks] == ["norm_growth"]


def test_shifted_maximal_sweep(tmp_path) -> None:
    config = RunConfig(command="norm-estimate", n=16, trials=3, operator="shifted_maximal", sigmas=[0, 1, 4, 16])
    report = _pipeline(tmp_path).run(config)
    assert report.results["fitted_C"] > 0
    assert len(report.table("shifted_maximal").rows) == 4


def test_domination_runs_each_kappa_on_its_own_grid(tmp_path) -> None:
    config = RunConfig(command="norm-estimate", n=32, trials=2, operator="domination", kappas=[1])
    report = _pipeline(tmp_path).run(config)
    assert report.passed, [check.name for check in report.failed_checks]
    assert report.results["grids"] == [64]
    assert [check.name for check in report.checks] == ["domination_constant", "coefficient_sum_linear"]
    assert len(report.table("trials").rows) == 2
    with pytest.raises(ValueError):
        RunConfig(command="norm-estimate", operator="domination", kappas=[0])


def test_missing_bitmap_file(tmp_path) -> None:
    config = RunConfig(command="pattern-search", n=8, bitmap=str(tmp_path / "absent.pbm"))
    with pytest.raises(FileNotFoundError):
        _pipeline(tmp_path).run(config)


def test_decay_fit_needs_lambdas_that_fit_the_grid(tmp_path) -> None:
    with pytest.raises(BandError):
        _pipeline(tmp_path).run(RunConfig(command="decay-fit", n=8, trials=2))
