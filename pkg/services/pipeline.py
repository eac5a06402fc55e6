from __future__ import annotations

import logging
import math
from collections.abc import Callable
from dataclasses import asdict
from functools import partial
from pathlib import Path
from typing import Any

import numpy as np
from scipy.stats import linregress

from harmonic.errors import BandError
from harmonic.littlewood_paley import band_range, multiplier_1d, square_function
from harmonic.paraproduct import (
    DyadicRectangle,
    FormInputs,
    FormQuadrature,
    direct_form_density,
    form_density,
    random_convex_tree,
    telescoping_refinement,
    tree_leaves,
)
from harmonic.patterns import (
    BitmapSet,
    count_integral,
    dichotomy_run,
    energy_constant,
    lower_bound_check,
    martingale_avg,
    pattern_search,
    verify_triple,
)
from harmonic.quadrature import QuadratureSpec
from harmonic.sampling import lowpass_field, lowpass_field_1d, ordered_map, stream
from harmonic.singular_ops import (
    DOMINATION_N,
    domination_coefficients,
    domination_sweep,
    norm_estimate,
    shifted_maximal_sweep,
)
from harmonic.smoothing_lab import (
    BandLimitSpec,
    SharpFlatParams,
    SublevelBox,
    adversarial_pair,
    autocorr_energy,
    autocorr_energy_by_shifts,
    decay_fit,
    flat_energy_bound,
    sharp_flat_split,
    structure_split,
    sublevel_fit,
)
from harmonic.torus_grid import (
    GridFunction1D,
    GridFunction2D,
    autocorrelation_sides,
    transform,
    zeros,
)
from models.report import CheckResult, ExperimentReport, Provenance, ReportTable
from models.run_config import RunConfig
from services.bitmap_io import load_bitmap
from services.report_service import ReportService

logger = logging.getLogger(__name__)

# tolerances of the identity suite
ROUND_TRIP_TOL = 1e-12
TELESCOPING_LP_TOL = 1e-12
AUTOCORRELATION_TOL = 1e-10
FORM_DENSITY_TOL = 1e-10
EXACT_TOL = 1e-12

NORM_GROWTH_LIMIT = 1.5
TELESCOPING_TOL = 1e-3
SUBLEVEL_MIN_SLOPE = 0.05
SHIFTED_MAXIMAL_MAX_EXPONENT = 1.0
# the coefficient sum of the domination bound must grow at most linearly in kappa up to this offset
DOMINATION_MAX_KAPPA = 6


def _check(name: str, value: float, tolerance: float, passed: bool | None = None, detail: str = "") -> CheckResult:
    value = float(value)
    return CheckResult(
        name=name,
        value=value,
        tolerance=float(tolerance),
        passed=value <= tolerance if passed is None else bool(passed),
        detail=detail,
    )


def _real_field(n: int, seed: int, role: str, trial: int) -> GridFunction2D:
    return GridFunction2D(n, lowpass_field(n, stream(seed, role, trial)).values.real)


def _random_bitmap(n: int, seed: int, density: float) -> BitmapSet:
    return BitmapSet(n, stream(seed, "bitmap").random((n, n)) < density)


def _telescope_tree(config: RunConfig, index: int) -> list[Any]:
    root = DyadicRectangle(0, 0, 0, config.alpha, config.beta)
    tree = random_convex_tree(root, config.depth, stream(config.seed, "tree", index))
    fs = tuple(_real_field(config.n, config.seed, role, index) for role in ("f1", "f2", "f3", "f4"))
    quad = FormQuadrature(space_nodes=config.form_space_nodes, t_nodes=config.form_t_nodes)
    results = telescoping_refinement(tree, fs, config.lam, config.r, quad, tuple(config.refinements))
    rising = sum(
        1
        for coarse, fine in zip(results, results[1:])
        if fine.residual > coarse.residual + 1e-12 * max(coarse.scale, 1.0)
    )
    row = [index, len(tree.rects), len(tree_leaves(tree))]
    row += [result.relative for result in results]
    return row + [rising]


def _sublevel_pair(config: RunConfig, box: SublevelBox, index: int) -> list[Any]:
    alpha_fn, beta_fn = adversarial_pair(config.n, stream(config.seed, "alpha", index), config.depth)
    report = sublevel_fit(alpha_fn, beta_fn, box, config.epsilons)
    return [index, report.fitted_sigma, report.fitted_C, report.is_monotone(), report.measures]


def _lower_bound_trial(n: int, seed: int, trial: int) -> tuple[int, int, float]:
    f = GridFunction2D(n, stream(seed, "unit", trial).random((n, n)))
    scales = range(int(math.log2(n)) + 1)
    checked, violations, margin = 0, 0, math.inf
    for k in scales:
        for l in scales:
            bound = lower_bound_check(f, k, l)
            checked += 1
            violations += 0 if bound.ok else 1
            margin = min(margin, bound.lhs - bound.rhs)
    return checked, violations, margin


class ExperimentPipeline:
    def __init__(self, report_service: ReportService) -> None:
        self.report_service = report_service
        self._handlers: dict[str, Callable[[RunConfig], ExperimentReport]] = {
            "norm-estimate": self.norm_estimate,
            "decay-fit": self.decay_fit,
            "telescope-check": self.telescope_check,
            "sublevel-fit": self.sublevel_fit,
            "pattern-search": self.pattern_search,
            "dichotomy": self.dichotomy,
            "lower-bound-sweep": self.lower_bound_sweep,
            "identity-suite": self.identity_suite,
        }

    def report_dir(self, config: RunConfig) -> Path:
        return Path(config.out) if config.out else self.report_service.default_dir(config.command)

    def run(self, config: RunConfig) -> ExperimentReport:
        """Compute a report without writing it; the result depends on (config, seed) only."""
        logger.info("Running %s (n=%d seed=%d)", config.command, config.n, config.seed)
        report = self._handlers[config.command](config)
        report.provenance = Provenance(
            command=config.command,
            n=config.n,
            seed=config.seed,
            config=config.model_dump(mode="json", exclude={"out", "max_workers"}),
        )
        for check in report.failed_checks:
            logger.warning(
                "Check %s failed: value=%.6g tolerance=%.6g %s", check.name, check.value, check.tolerance, check.detail
            )
        return report

    def execute(self, config: RunConfig) -> tuple[ExperimentReport, Path]:
        report = self.run(config).stamp()
        path = self.report_service.save_report(report, self.report_dir(config))
        logger.info("Report written to %s (passed=%s)", path, report.passed)
        return report, path

    def _report(
        self,
        config: RunConfig,
        results: dict[str, Any],
        checks: list[CheckResult],
        tables: list[ReportTable],
    ) -> ExperimentReport:
        return ExperimentReport(
            command=config.command,
            provenance=Provenance(command=config.command, n=config.n, seed=config.seed),
            results=results,
            checks=checks,
            tables=tables,
        )

    # --- commands -------------------------------------------------------------------------------

    def norm_estimate(self, config: RunConfig) -> ExperimentReport:
        if config.operator == "shifted_maximal":
            return self._shifted_maximal(config)
        if config.operator == "domination":
            return self._domination(config)
        summary_rows: list[list[Any]] = []
        trial_rows: list[list[Any]] = []
        maxima: list[float] = []
        for n in config.grid_sizes:
            quad = QuadratureSpec.for_grid(n, config.nodes_per_shell)
            estimate = norm_estimate(config.operator, n, config.trials, config.seed, quad, config.max_workers)
            maxima.append(estimate.ratio_max)
            summary_rows.append([n, estimate.ratio_max, estimate.ratio_median])
            trial_rows.extend([n, trial, ratio] for trial, ratio in enumerate(estimate.ratios))
        growth = [b / a for a, b in zip(maxima, maxima[1:]) if a > 0]
        results: dict[str, Any] = {
            "operator": config.operator,
            "sizes": config.grid_sizes,
            "ratio_max": maxima,
            "ratio_median": [row[2] for row in summary_rows],
            "growth": growth,
        }
        checks = []
        if growth:
            checks.append(_check("norm_growth", max(growth), NORM_GROWTH_LIMIT, detail="max ratio growth per step"))
        tables = [
            ReportTable(name="norms", columns=["n", "ratio_max", "ratio_median"], rows=summary_rows),
            ReportTable(name="trials", columns=["n", "trial", "ratio"], rows=trial_rows),
        ]
        return self._report(config, results, checks, tables)

    def _shifted_maximal(self, config: RunConfig) -> ExperimentReport:
        n, sigmas = config.n, config.sigmas

        def sweep(trial: int) -> list[float]:
            return shifted_maximal_sweep(lowpass_field_1d(n, stream(config.seed, "g", trial)), sigmas)

        ratios = np.asarray(ordered_map(sweep, range(config.trials), config.max_workers))
        peak = ratios.max(axis=0)
        root_log = np.sqrt(np.log(2.0 + np.asarray(sigmas)))
        constant = float(np.max(peak / root_log))
        exponent = 0.0
        if len(sigmas) >= 2:
            exponent = float(linregress(np.log(np.log(2.0 + np.asarray(sigmas))), np.log(peak)).slope)
        rows = [[float(s), float(p), float(p / r)] for s, p, r in zip(sigmas, peak, root_log)]
        results = {"operator": "shifted_maximal", "fitted_C": constant, "log_exponent": exponent}
        checks = [
            _check(
                "shifted_maximal_growth",
                exponent,
                SHIFTED_MAXIMAL_MAX_EXPONENT,
                detail="slope of log ratio against log log(2 + sigma)",
            )
        ]
        table = ReportTable(name="shifted_maximal", columns=["sigma", "ratio_max", "ratio_over_root_log"], rows=rows)
        return self._report(config, results, checks, [table])

    def _domination(self, config: RunConfig) -> ExperimentReport:
        estimates = domination_sweep(
            config.kappas,
            config.trials,
            config.seed,
            config.n,
            QuadratureSpec(nodes_per_shell=config.nodes_per_shell),
            max_workers=config.max_workers,
        )
        ratios = [ratio for estimate in estimates for ratio in estimate.ratios]
        constant = max(ratios)
        sums = [domination_coefficients(kappa, DOMINATION_N)[1] for kappa in range(1, DOMINATION_MAX_KAPPA + 1)]
        growth = max(total / (kappa * sums[0]) for kappa, total in enumerate(sums, start=1))
        results = {
            "operator": "domination",
            "kappas": list(config.kappas),
            "grids": [estimate.n for estimate in estimates],
            "fitted_C": constant,
            "ratio_max": [estimate.ratio_max for estimate in estimates],
            "ratio_median": [estimate.ratio_median for estimate in estimates],
            "coefficient_sums": sums,
        }
        checks = [
            _check(
                "domination_constant",
                constant,
                0.0,
                passed=math.isfinite(constant) and constant > 0,
                detail="one constant C over every pair and kappa; must be finite and positive",
            ),
            _check(
                "coefficient_sum_linear",
                growth,
                1.0 + EXACT_TOL,
                detail=f"max over kappa <= {DOMINATION_MAX_KAPPA} of S(kappa) / (kappa S(1)), S = sum a log(2 + |sigma|)",
            ),
        ]
        summary = [[e.kappa, e.n, e.ratio_max, e.ratio_median] for e in estimates]
        trial_rows = [[e.kappa, trial, ratio] for e in estimates for trial, ratio in enumerate(e.ratios)]
        tables = [
            ReportTable(name="domination", columns=["kappa", "n", "ratio_max", "ratio_median"], rows=summary),
            ReportTable(name="trials", columns=["kappa", "trial", "ratio"], rows=trial_rows),
        ]
        return self._report(config, results, checks, tables)

    def decay_fit(self, config: RunConfig) -> ExperimentReport:
        lambdas = config.decay_lambdas
        if not lambdas:
            raise BandError(f"no default lambdas fit a grid of n={config.n}; pass --lambdas")
        lam0 = lambdas[0]
        if config.control:
            # f2 keeps its conforming band, held at the first lambda
            band1, band2 = BandLimitSpec(1, lam0, "mean"), BandLimitSpec(2, lam0, "lowpass", frozen=True)
        else:
            band1, band2 = BandLimitSpec(1, lam0, "annulus"), BandLimitSpec(2, lam0, "lowpass")
        quad = QuadratureSpec.for_grid(config.n, config.nodes_per_shell)
        return decay_fit(
            band1,
            band2,
            lambdas,
            config.trials,
            quad=quad,
            n=config.n,
            seed=config.seed,
            max_workers=config.max_workers,
        )

    def telescope_check(self, config: RunConfig) -> ExperimentReport:
        rows = ordered_map(partial(_telescope_tree, config), range(config.trees), config.max_workers)
        base = [row[3] for row in rows]
        rising = sum(row[-1] for row in rows)
        results = {
            "trees": config.trees,
            "relative_residual_max": max(base),
            "refinements": config.refinements,
            "rising_refinements": rising,
        }
        checks = [
            _check("telescoping_residual", max(base), TELESCOPING_TOL),
            _check("refinement_monotone", rising, 0.0, detail="residual increases under refinement"),
        ]
        columns = ["tree", "rects", "leaves"] + [f"relative_x{f}" for f in config.refinements] + ["rising"]
        return self._report(config, results, checks, [ReportTable(name="telescoping", columns=columns, rows=rows)])

    def sublevel_fit(self, config: RunConfig) -> ExperimentReport:
        box = SublevelBox(xy_samples=2 * config.n)
        rows = ordered_map(partial(_sublevel_pair, config, box), range(config.trials), config.max_workers)
        slopes = [row[1] for row in rows]
        monotone = all(row[3] for row in rows)
        control = sublevel_fit(zeros(config.n), zeros(config.n), box, config.epsilons)
        control_gap = max(abs(m - box.measure) for m in control.measures)
        measure_rows = [[row[0], eps, m] for row in rows for eps, m in zip(config.epsilons, row[4])]
        results = {
            "box_measure": box.measure,
            "slope_min": min(slopes),
            "slope_median": float(np.median(slopes)),
            "monotone": monotone,
            "control_measures": control.measures,
        }
        checks = [
            _check("min_slope", min(slopes), SUBLEVEL_MIN_SLOPE, passed=min(slopes) >= SUBLEVEL_MIN_SLOPE),
            _check("monotone_in_eps", 0.0 if monotone else 1.0, 0.0),
            _check("control_full_box", control_gap, EXACT_TOL),
        ]
        tables = [
            ReportTable(name="sublevel_fits", columns=["pair", "sigma", "C", "monotone"], rows=[r[:4] for r in rows]),
            ReportTable(name="sublevel_measures", columns=["pair", "eps", "measure"], rows=measure_rows),
        ]
        return self._report(config, results, checks, tables)

    def _bitmap(self, config: RunConfig) -> BitmapSet:
        if config.bitmap:
            return load_bitmap(Path(config.bitmap))
        return _random_bitmap(config.n, config.seed, config.density)

    def pattern_search(self, config: RunConfig) -> ExperimentReport:
        e = self._bitmap(config)
        t_min = 1.0 / e.n if config.t_min is None else config.t_min
        triple = pattern_search(e, t_min)
        count = count_integral(e.to_grid(), t_min=t_min)
        reread = load_bitmap(Path(config.bitmap)) if config.bitmap else e
        verified = triple is not None and verify_triple(reread, triple)
        results: dict[str, Any] = {
            "n": e.n,
            "density": e.density,
            "t_min": t_min,
            "count": count,
            "triple": "none" if triple is None else asdict(triple),
        }
        checks = [_check("count_consistency", 0.0 if (count > 0) == (triple is not None) else 1.0, 0.0)]
        if triple is not None:
            checks.append(_check("triple_verified", 0.0 if verified else 1.0, 0.0, detail="fresh read of the bitmap"))
        return self._report(config, results, checks, [])

    def dichotomy(self, config: RunConfig) -> ExperimentReport:
        f = self._bitmap(config).to_grid()
        run = dichotomy_run(f, config.k0, config.m_factor, config.max_iter, c=config.threshold_c)
        energy = sum(record.increment**2 for record in run.records)
        constant = energy_constant(config.k0, config.m_factor, config.max_iter, f.n)
        bound = constant * float(np.mean(np.abs(f.values) ** 2))
        results = {
            "density": run.density,
            "truncated": run.truncated,
            "branches": [record.branch for record in run.records],
            "energy": energy,
            "energy_bound": bound,
        }
        checks = [_check("energy_bound", energy, bound)]
        columns = ["l", "k_l", "count_I", "increment", "branch"]
        table = ReportTable(name="dichotomy", columns=columns, rows=run.table_rows())
        return self._report(config, results, checks, [table])

    def lower_bound_sweep(self, config: RunConfig) -> ExperimentReport:
        rows = []
        total_violations = 0
        for n in config.grid_sizes:
            trials = ordered_map(partial(_lower_bound_trial, n, config.seed), range(config.trials), config.max_workers)
            checked = sum(t[0] for t in trials)
            violations = sum(t[1] for t in trials)
            total_violations += violations
            rows.append([n, config.trials, checked, violations, min(t[2] for t in trials)])
        results = {"sizes": config.grid_sizes, "violations": total_violations}
        checks = [_check("violations", total_violations, 0.0)]
        table = ReportTable(name="lower_bound", columns=["n", "trials", "pairs", "violations", "min_margin"], rows=rows)
        return self._report(config, results, checks, [table])

    def identity_suite(self, config: RunConfig) -> ExperimentReport:
        n, seed = config.n, config.seed
        rng = stream(seed, "identity")
        values = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        f = GridFunction2D(n, values)
        g = GridFunction1D(n, rng.standard_normal(n) + 1j * rng.standard_normal(n))
        scale = float(np.max(np.abs(values)))
        checks: list[CheckResult] = []

        spectrum = transform(f, "forward")
        back = transform(spectrum, "inverse")
        checks.append(_check("round_trip", np.max(np.abs(back.values - values)) / scale, ROUND_TRIP_TOL))
        energy = float(np.mean(np.abs(values) ** 2))
        parseval = abs(float(np.sum(np.abs(spectrum.coeffs) ** 2)) - energy) / energy
        checks.append(_check("parseval", parseval, ROUND_TRIP_TOL))

        lo, hi = band_range(n)
        worst = 0.0
        for a in range(lo, hi + 1):
            for b in range(a + 1, hi + 1):
                deltas = sum(multiplier_1d("delta", j, n) for j in range(a + 1, b + 1))
                gap = multiplier_1d("s_partial", b, n) - multiplier_1d("s_partial", a, n) - deltas
                worst = max(worst, float(np.max(np.abs(gap))))
        checks.append(_check("lp_telescoping", worst, TELESCOPING_LP_TOL))
        excess = max(float(np.mean(np.abs(square_function(f, axis).values) ** 2)) - energy for axis in (1, 2))
        checks.append(_check("square_function_bound", excess / energy, EXACT_TOL))

        left, right = autocorrelation_sides(values)
        sides_gap = float(np.max(np.abs(left - right)) / np.max(np.abs(right)))
        checks.append(_check("autocorrelation_sides", sides_gap, AUTOCORRELATION_TOL))
        radius = max(1.0, n / 8)
        by_pairs, by_shifts = autocorr_energy(g, radius), autocorr_energy_by_shifts(g, radius)
        energy_gap = abs(by_pairs - by_shifts) / max(by_pairs, 1e-300)
        checks.append(_check("autocorrelation_energy", energy_gap, AUTOCORRELATION_TOL))

        rho = 0.1
        params = SharpFlatParams(R=max(1.0, n / 8), rho=rho)
        split = sharp_flat_split(g, params)
        reconstruction = float(np.max(np.abs(split.sharp.values + split.flat.values - g.values)))
        g_scale = max(1.0, float(np.max(np.abs(g.values))))
        checks.append(_check("sharp_flat_reconstruction", reconstruction, EXACT_TOL * g_scale))
        checks.append(_check("sharp_window_count", len(split.selected), 4.0 / rho))
        flat_energy, flat_ceiling = flat_energy_bound(g, split, params)
        checks.append(_check("sharp_flat_energy", flat_energy, flat_ceiling, detail="C rho |g|^4 ceiling"))
        parts = structure_split(g, radius, rho)
        inner = abs(complex(np.vdot(parts.g.values, parts.h.values))) / n
        checks.append(_check("structure_orthogonality", inner, EXACT_TOL * g_scale**2))

        idempotence, mass = 0.0, 0.0
        for axis in (1, 2):
            for k in range(int(math.log2(n)) + 1):
                once = martingale_avg(f, axis, k)
                twice = martingale_avg(once, axis, k)
                idempotence = max(idempotence, float(np.max(np.abs(twice.values - once.values))))
                mass = max(mass, abs(complex(np.mean(once.values) - np.mean(values))))
        checks.append(_check("martingale_idempotence", idempotence / scale, EXACT_TOL))
        checks.append(_check("martingale_mass", mass / scale, EXACT_TOL))

        small = 8
        fs = FormInputs.of(*(GridFunction2D(small, rng.standard_normal((small, small))) for _ in range(4)))
        a, a2, b, b2 = (rng.standard_normal(small) for _ in range(4))
        fast, slow = form_density(fs, a, a2, b, b2), direct_form_density(fs, a, a2, b, b2)
        checks.append(_check("form_factorization", abs(fast - slow) / max(abs(slow), 1.0), FORM_DENSITY_TOL))

        rows = [[c.name, c.value, c.tolerance, c.passed] for c in checks]
        results = {"identities": len(checks), "failed": [c.name for c in checks if not c.passed]}
        table = ReportTable(name="identities", columns=["identity", "residual", "tolerance", "passed"], rows=rows)
        return self._report(config, results, checks, [table])
