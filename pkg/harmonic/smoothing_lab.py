"""Frequency-structure tools for one-dimensional fibers, sublevel measures and decay fits.

Frequency distances are cyclic on the n-grid, which keeps the pair-sum form of the
autocorrelation energy equal to its shift-averaged form for every input.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import partial
from typing import Any, Literal

import numpy as np
from scipy.stats import linregress

from harmonic.errors import BandError, LabError, LevelError, TrialCountError
from harmonic.quadrature import CutoffSpec, QuadratureSpec
from harmonic.sampling import gaussian_spectrum, ordered_map, stream
from harmonic.singular_ops import local_t
from harmonic.torus_grid import Axis, GridFunction1D, GridFunction2D, check_grid_size, frequencies, norm_lp
from harmonic.windows import build_window
from models.report import CheckResult, ExperimentReport, Provenance, ReportTable
from models.sublevel import SublevelReport

logger = logging.getLogger(__name__)

BandMode = Literal["annulus", "lowpass", "mean"]

# eta bump used for the unit-translate partition of the frequency line
SHARP_WINDOW_DELTA = 0.25
# each unselected window holds under 2 rho ||f||^2 and a cyclic ball of radius R meets at most seven supports
FLAT_ENERGY_CONSTANT = 14.0


def _coefficients(f: GridFunction1D) -> np.ndarray:
    return np.fft.fft(f.values) / f.n


def _cyclic_distance(n: int) -> np.ndarray:
    k = frequencies(n)
    diff = (k[:, None] - k[None, :]) % n
    return np.abs(np.where(diff > n // 2, diff - n, diff))


def autocorr_energy(f: GridFunction1D, radius: float) -> float:
    """sum over frequency pairs at cyclic distance <= radius of |f^(xi)|^2 |f^(xi')|^2."""
    if radius < 0:
        raise LabError(f"radius must be non-negative, got {radius}")
    power = np.abs(_coefficients(f)) ** 2
    close = _cyclic_distance(f.n) <= radius
    return float(power @ close @ power)


def autocorr_energy_by_shifts(f: GridFunction1D, radius: float) -> float:
    """Average over grid shifts s of sum_{|eta| <= radius} |(f(. + s) conj f)^(eta)|^2."""
    n = f.n
    index = (np.arange(n)[:, None] + np.arange(n)[None, :]) % n
    products = f.values[index] * np.conj(f.values)[None, :]
    spectra = np.fft.fft(products, axis=1) / n
    band = np.abs(frequencies(n)) <= radius
    return float(np.sum(np.abs(spectra[:, band]) ** 2) / n)


@dataclass(frozen=True, eq=False)
class StructureSplit:
    g: GridFunction1D
    h: GridFunction1D
    center: int
    hypothesis_holds: bool
    guarantee_holds: bool


def _ball_masses(power: np.ndarray, radius: float) -> np.ndarray:
    return (_cyclic_distance(power.size) <= radius) @ power


def structure_split(f: GridFunction1D, radius: float, rho: float) -> StructureSplit:
    """Keep the frequency ball of the given radius holding the most spectral mass."""
    if not 0.0 < rho < 1.0:
        raise LabError(f"rho must lie in (0, 1), got {rho}")
    n = f.n
    coeffs = _coefficients(f)
    power = np.abs(coeffs) ** 2
    masses = _ball_masses(power, radius)
    best = int(np.argmax(masses))
    ball = _cyclic_distance(n)[best] <= radius
    g = GridFunction1D(n, np.fft.ifft(np.where(ball, coeffs, 0.0)) * n)
    h = GridFunction1D(n, np.fft.ifft(np.where(ball, 0.0, coeffs)) * n)
    total = float(power.sum())
    hypothesis = autocorr_energy(f, radius) >= rho * total**2
    guarantee = math.sqrt(float(masses[best])) >= 0.5 * math.sqrt(rho * total)
    if not hypothesis:
        logger.warning("structure_split: autocorrelation energy below rho |f|^4; no norm guarantee")
    return StructureSplit(g, h, int(frequencies(n)[best]), hypothesis, guarantee)


@dataclass(frozen=True)
class SharpFlatParams:
    R: float
    rho: float

    def __post_init__(self) -> None:
        if self.R < 1:
            raise LabError(f"window length R must be at least 1, got {self.R}")
        if not 0.0 < self.rho < 1.0:
            raise LabError(f"rho must lie in (0, 1), got {self.rho}")


@dataclass(frozen=True, eq=False)
class SharpFlatSplit:
    sharp: GridFunction1D
    flat: GridFunction1D
    selected: list[int]


def sharp_windows(n: int, length: float) -> tuple[list[int], np.ndarray]:
    """Window indices m and values eta(xi / length - m) on FFT-ordered frequencies; they sum to 1."""
    eta = build_window("spatial_eta", {"delta": SHARP_WINDOW_DELTA})
    k = frequencies(n)
    reach = 0.5 + SHARP_WINDOW_DELTA
    first = math.floor(k.min() / length - reach)
    last = math.ceil(k.max() / length + reach)
    indices = list(range(first, last + 1))
    values = np.stack([eta(k / length - m) for m in indices])
    return indices, values


def sharp_flat_split(f: GridFunction1D, params: SharpFlatParams) -> SharpFlatSplit:
    n = f.n
    if params.R > n / 2:
        raise LabError(f"window length R={params.R} exceeds n/2={n / 2}")
    coeffs = _coefficients(f)
    power = np.abs(coeffs) ** 2
    threshold = params.rho * float(power.sum())
    k = frequencies(n)
    reach = 0.5 + SHARP_WINDOW_DELTA
    indices, values = sharp_windows(n, params.R)
    selected = []
    sharp_coeffs = np.zeros(n, dtype=np.complex128)
    for m, w in zip(indices, values):
        lower, upper = params.R * (m - reach), params.R * (m + reach)
        starts = np.arange(lower, upper - params.R + 1e-9, params.R / 4)
        for start in starts:
            inside = (k >= start) & (k <= start + params.R)
            if threshold > 0 and power[inside].sum() >= threshold:
                selected.append(m)
                sharp_coeffs += w * coeffs
                break
    sharp = GridFunction1D(n, np.fft.ifft(sharp_coeffs) * n)
    flat = GridFunction1D(n, f.values - sharp.values)
    return SharpFlatSplit(sharp, flat, selected)


def flat_energy_bound(f: GridFunction1D, split: SharpFlatSplit, params: SharpFlatParams) -> tuple[float, float]:
    """autocorr_energy of the flat part at radius R, and its ceiling C rho ||f||_2^4."""
    norm_sq = float(np.sum(np.abs(_coefficients(f)) ** 2))
    return autocorr_energy(split.flat, params.R), FLAT_ENERGY_CONSTANT * params.rho * norm_sq**2


@dataclass(frozen=True)
class SublevelBox:
    """K = [x0, x1] x [y0, y1] x [t0, t1] sampled at cell midpoints."""

    x0: float = 0.0
    x1: float = 1.0
    y0: float = 0.0
    y1: float = 1.0
    t0: float = 1.0
    t1: float = 2.0
    xy_samples: int = 64
    t_samples: int = 1024

    def __post_init__(self) -> None:
        if not (self.x0 < self.x1 and self.y0 < self.y1 and 0.0 < self.t0 < self.t1):
            raise LevelError(f"sublevel box must be nondegenerate with t > 0, got {self}")

    @property
    def measure(self) -> float:
        return (self.x1 - self.x0) * (self.y1 - self.y0) * (self.t1 - self.t0)

    def axis(self, lower: float, upper: float, count: int) -> np.ndarray:
        return lower + (np.arange(count) + 0.5) * (upper - lower) / count


def _lookup(f: GridFunction2D, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    i = np.floor((x % 1.0) * f.n).astype(int) % f.n
    j = np.floor((y % 1.0) * f.n).astype(int) % f.n
    return f.values.real[i, j]


def sublevel_measure(alpha_fn: GridFunction2D, beta_fn: GridFunction2D, box: SublevelBox, eps: float) -> float:
    """|{(x, y, t) in K : |alpha(x + t, y) - 2t beta(x, y + t^2)| <= eps}| by cell counting."""
    if not eps > 0:
        raise LevelError(f"epsilon must be positive, got {eps}")
    x = box.axis(box.x0, box.x1, box.xy_samples)
    y = box.axis(box.y0, box.y1, box.xy_samples)
    xx, yy = np.meshgrid(x, y, indexing="ij")
    hits = 0
    for t in box.axis(box.t0, box.t1, box.t_samples):
        gap = _lookup(alpha_fn, xx + t, yy) - 2.0 * t * _lookup(beta_fn, xx, yy + t * t)
        hits += int(np.count_nonzero(np.abs(gap) <= eps))
    return box.measure * hits / (box.xy_samples**2 * box.t_samples)


def adversarial_pair(n: int, rng: np.random.Generator, depth: int) -> tuple[GridFunction2D, GridFunction2D]:
    """Piecewise-constant alpha, beta on a random dyadic partition; values +-[1/2, 2]."""
    n = check_grid_size(n)
    depth = min(depth, int(math.log2(n)))

    def draw() -> np.ndarray:
        values = np.zeros((n, n))
        cells = [(0, 0, n)]
        while cells:
            i, j, size = cells.pop()
            level = int(math.log2(n // size))
            if level < depth and rng.random() < 0.6:
                half = size // 2
                cells.extend([(i, j, half), (i + half, j, half), (i, j + half, half), (i + half, j + half, half)])
                continue
            values[i : i + size, j : j + size] = rng.choice([-1.0, 1.0]) * rng.uniform(0.5, 2.0)
        return values

    return GridFunction2D(n, draw()), GridFunction2D(n, draw())


def sublevel_fit(
    alpha_fn: GridFunction2D,
    beta_fn: GridFunction2D,
    box: SublevelBox,
    epsilons: list[float],
) -> SublevelReport:
    """Measures over ``epsilons`` and the least-squares power law C eps^sigma through the positive ones."""
    measures = [sublevel_measure(alpha_fn, beta_fn, box, eps) for eps in epsilons]
    positive = [(e, m) for e, m in zip(epsilons, measures) if m > 0]
    sigma, constant = 0.0, max(measures, default=0.0)
    if len({e for e, _ in positive}) >= 2:
        fit = linregress(np.log([e for e, _ in positive]), np.log([m for _, m in positive]))
        sigma, constant = float(fit.slope), float(math.exp(fit.intercept))
    return SublevelReport(
        epsilons=list(epsilons),
        measures=measures,
        fitted_sigma=sigma,
        fitted_C=constant,
        box_measure=box.measure,
    )


@dataclass(frozen=True)
class BandLimitSpec:
    """Band on ``axis``; the other axis is limited to |xi| <= base_width.

    A frozen band keeps its own lambda when the sweep moves on.
    """

    axis: Axis
    lam: float
    mode: BandMode = "annulus"
    base_width: int = 4
    frozen: bool = False

    def __post_init__(self) -> None:
        if self.axis not in (1, 2):
            raise BandError(f"axis must be 1 or 2, got {self.axis!r}")
        if self.mode not in ("annulus", "lowpass", "mean"):
            raise BandError(f"unknown band mode: {self.mode!r}")
        if self.lam < 1:
            raise BandError(f"lambda must be at least 1, got {self.lam}")

    def with_lambda(self, lam: float) -> BandLimitSpec:
        if self.frozen:
            return self
        return BandLimitSpec(self.axis, lam, self.mode, self.base_width)

    def mask(self, n: int) -> np.ndarray:
        if 2 * self.lam > n / 2:
            raise BandError(f"band up to 2 lambda = {2 * self.lam} is not representable on n={n}")
        k = np.abs(frequencies(n))
        if self.mode == "annulus":
            along = (k >= self.lam) & (k <= 2 * self.lam)
        elif self.mode == "lowpass":
            along = k <= 2 * self.lam
        else:
            along = k == 0
        across = k <= self.base_width
        mask = np.outer(along, across) if self.axis == 1 else np.outer(across, along)
        if not np.any(mask):
            raise BandError(f"band {self} selects no frequencies on n={n}")
        return mask.astype(float)


def _unit_sup(f: GridFunction2D) -> GridFunction2D:
    peak = float(np.max(np.abs(f.values)))
    return GridFunction2D(f.n, f.values / peak) if peak > 0 else f


def _decay_trial(
    band1: BandLimitSpec,
    band2: BandLimitSpec,
    n: int,
    seed: int,
    trial: int,
    zeta: CutoffSpec,
    quad: QuadratureSpec,
) -> float:
    f1 = _unit_sup(gaussian_spectrum(n, stream(seed, "f1", trial), band1.mask(n)))
    f2 = _unit_sup(gaussian_spectrum(n, stream(seed, "f2", trial), band2.mask(n)))
    return norm_lp(local_t(f1, f2, zeta, quad), 1)


def _band_summary(band: BandLimitSpec) -> dict[str, Any]:
    summary: dict[str, Any] = {"axis": band.axis, "mode": band.mode, "base_width": band.base_width}
    if band.frozen:
        summary["frozen_lambda"] = band.lam
    return summary


def decay_fit(
    band1: BandLimitSpec,
    band2: BandLimitSpec,
    lambdas: list[float],
    trials: int,
    zeta: CutoffSpec | None = None,
    quad: QuadratureSpec | None = None,
    n: int = 64,
    seed: int = 1,
    max_workers: int = 1,
) -> ExperimentReport:
    """Median of ||T_loc(f1, f2)||_1 over band-limited draws with ||f_j||_inf = 1, fitted against lambda.

    Draws depend on (seed, trial) only, so every lambda sees the same underlying Gaussian arrays.
    """
    if trials < 10:
        raise TrialCountError(f"decay fit needs at least 10 trials, got {trials}")
    if len(lambdas) < 2:
        raise BandError("decay fit needs at least two lambda values")
    n = check_grid_size(n)
    zeta = CutoffSpec() if zeta is None else zeta
    quad = QuadratureSpec.for_grid(n) if quad is None else quad
    for lam in lambdas:
        band1.with_lambda(lam).mask(n)
        band2.with_lambda(lam).mask(n)

    rows = []
    medians = []
    for lam in lambdas:
        b1, b2 = band1.with_lambda(lam), band2.with_lambda(lam)
        run = partial(_decay_trial, b1, b2, n, seed, zeta=zeta, quad=quad)
        values = ordered_map(run, range(trials), max_workers)
        median, peak = float(np.median(values)), float(np.max(values))
        medians.append(median)
        rows.append([float(lam), median, peak])
        logger.info("decay fit lambda=%g median=%.4g max=%.4g", lam, median, peak)

    fit = linregress(np.log(lambdas), np.log(np.maximum(medians, 1e-300)))
    slope = float(fit.slope)
    results = {
        "slope": slope,
        "fitted_sigma": -slope,
        "intercept": float(fit.intercept),
        "band1": _band_summary(band1),
        "band2": _band_summary(band2),
        "zeta": zeta.to_dict(),
        "quad": quad.to_dict(),
        "trials": trials,
    }
    control = band1.mode != "annulus"
    check = (
        CheckResult(name="control_flat", value=abs(slope), tolerance=0.05, passed=abs(slope) < 0.05)
        if control
        else CheckResult(name="positive_decay", value=-slope, tolerance=0.0, passed=-slope > 0.0)
    )
    return ExperimentReport(
        command="decay-fit",
        provenance=Provenance(command="decay-fit", n=n, seed=seed),
        results=results,
        checks=[check],
        tables=[ReportTable(name="decay", columns=["lambda", "median", "max"], rows=rows)],
    )
