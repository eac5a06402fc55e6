from __future__ import annotations

import numpy as np
import pytest

from harmonic.errors import BandError, LabError, LevelError, TrialCountError
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
    sharp_windows,
    structure_split,
    sublevel_fit,
    sublevel_measure,
)
from harmonic.torus_grid import GridFunction1D, constant, from_callable_1d, norm_lp_1d


def _random_fiber(n: int, seed: int) -> GridFunction1D:
    rng = np.random.default_rng(seed)
    return GridFunction1D(n, rng.standard_normal(n) + 1j * rng.standard_normal(n))


@pytest.mark.parametrize("radius", [0, 1, 3, 16])
def test_autocorrelation_energy_forms_agree(radius: int) -> None:
    f = _random_fiber(32, seed=radius)
    by_pairs = autocorr_energy(f, radius)
    assert autocorr_energy_by_shifts(f, radius) == pytest.approx(by_pairs, rel=1e-10)


def test_structure_split_is_orthogonal() -> None:
    f = _random_fiber(32, seed=4)
    split = structure_split(f, 2, 0.2)
    assert np.max(np.abs(split.g.values + split.h.values - f.values)) < 1e-12
    energy = norm_lp_1d(split.g, 2) ** 2 + norm_lp_1d(split.h, 2) ** 2
    assert energy == pytest.approx(norm_lp_1d(f, 2) ** 2, rel=1e-12)
    with pytest.raises(LabError):
        structure_split(f, 2, 1.0)


def test_structure_split_of_a_single_mode() -> None:
    f = from_callable_1d(32, lambda x: np.exp(2j * np.pi * 5 * x))
    split = structure_split(f, 1, 0.5)
    assert split.hypothesis_holds and split.guarantee_holds
    assert split.center in (4, 5, 6)
    assert np.max(np.abs(split.g.values - f.values)) < 1e-12


def test_sharp_windows_partition_unity() -> None:
    _, values = sharp_windows(32, 4.0)
    assert np.allclose(values.sum(axis=0), 1.0, atol=1e-12)


def test_sharp_flat_split_reconstructs() -> None:
    f = _random_fiber(64, seed=5)
    params = SharpFlatParams(R=8, rho=0.1)
    split = sharp_flat_split(f, params)
    assert np.max(np.abs(split.sharp.values + split.flat.values - f.values)) < 1e-12
    assert len(split.selected) <= 4 / params.rho


@pytest.mark.parametrize(
    ("n", "R", "rho", "seed"),
    [(64, 8, 0.1, 5), (64, 1, 0.05, 6), (32, 4, 0.3, 7), (128, 16, 0.02, 8)],
)
def test_flat_part_energy_stays_under_the_ceiling(n: int, R: float, rho: float, seed: int) -> None:
    f = _random_fiber(n, seed)
    params = SharpFlatParams(R=R, rho=rho)
    energy, ceiling = flat_energy_bound(f, sharp_flat_split(f, params), params)
    assert 0 <= energy <= ceiling


def test_flat_part_energy_with_a_dominant_mode() -> None:
    n = 64
    rng = np.random.default_rng(9)
    f = from_callable_1d(n, lambda x: 6 * np.exp(2j * np.pi * 11 * x))
    f = GridFunction1D(n, f.values + rng.standard_normal(n))
    params = SharpFlatParams(R=4, rho=0.1)
    split = sharp_flat_split(f, params)
    energy, ceiling = flat_energy_bound(f, split, params)
    assert split.selected
    assert energy <= ceiling
    assert energy < autocorr_energy(f, params.R)


def test_sharp_part_of_a_single_mode_is_the_mode() -> None:
    f = from_callable_1d(32, lambda x: np.exp(2j * np.pi * 5 * x))
    split = sharp_flat_split(f, SharpFlatParams(R=4, rho=0.5))
    assert np.max(np.abs(split.sharp.values - f.values)) < 1e-12
    assert np.max(np.abs(split.flat.values)) < 1e-12


def test_sharp_part_stays_on_the_spectrum() -> None:
    n = 32
    f = from_callable_1d(n, lambda x: np.exp(2j * np.pi * 3 * x) + 0.5 * np.exp(-2j * np.pi * 9 * x))
    split = sharp_flat_split(f, SharpFlatParams(R=4, rho=0.1))
    coeffs = np.fft.fft(split.sharp.values) / n
    support = np.abs(np.fft.fft(f.values)) > 1e-9
    assert np.max(np.abs(coeffs[~support])) < 1e-12


def test_sharp_flat_parameter_checks() -> None:
    with pytest.raises(LabError):
        SharpFlatParams(R=0.5, rho=0.1)
    with pytest.raises(LabError):
        SharpFlatParams(R=2, rho=1.5)
    with pytest.raises(LabError):
        sharp_flat_split(_random_fiber(8, 1), SharpFlatParams(R=8, rho=0.1))


def test_sublevel_measure_of_a_linear_gap() -> None:
    box = SublevelBox(xy_samples=4)
    alpha = constant(8, 1.0)
    beta = constant(8, 0.5)
    for eps in (0.5, 0.125, 2.0**-6):
        assert sublevel_measure(alpha, beta, box, eps) == pytest.approx(eps, abs=2 / 1024)
    assert sublevel_measure(constant(8, 0.0), constant(8, 0.0), box, 0.1) == pytest.approx(box.measure)
    with pytest.raises(LevelError):
        sublevel_measure(alpha, beta, box, 0.0)
    with pytest.raises(LevelError):
        SublevelBox(t0=0.0)


def test_sublevel_fit_recovers_the_linear_exponent() -> None:
    box = SublevelBox(xy_samples=4)
    report = sublevel_fit(constant(8, 1.0), constant(8, 0.5), box, [2.0**-k for k in range(1, 7)])
    assert report.is_monotone()
    assert report.fitted_sigma == pytest.approx(1.0, abs=1e-9)
    assert report.fitted_C == pytest.approx(1.0, rel=1e-9)


def test_adversarial_pair_values() -> None:
    alpha, beta = adversarial_pair(16, np.random.default_rng(2), depth=3)
    for f in (alpha, beta):
        magnitudes = np.abs(f.values.real)
        assert np.all((magnitudes >= 0.5) & (magnitudes <= 2.0))


def test_band_limit_masks() -> None:
    n = 32
    annulus = BandLimitSpec(1, 4).mask(n)
    assert annulus.shape == (n, n)
    assert annulus[4, 0] == 1 and annulus[3, 0] == 0 and annulus[8, 4] == 1 and annulus[8, 5] == 0
    mean = BandLimitSpec(2, 4, "mean").mask(n)
    assert np.all(mean[:, 1:] == 0) and mean[0, 0] == 1
    with pytest.raises(BandError):
        BandLimitSpec(1, 16).mask(n)
    with pytest.raises(BandError):
        BandLimitSpec(1, 0.5)
    assert BandLimitSpec(2, 4, "lowpass").with_lambda(8).lam == 8


def test_decay_fit_control_is_flat() -> None:
    report = decay_fit(
        BandLimitSpec(1, 1, "mean"),
        BandLimitSpec(2, 1, "lowpass", frozen=True),
        [1.0, 2.0],
        trials=10,
        n=16,
    )
    assert report.results["slope"] == 0.0
    assert [check.name for check in report.checks] == ["control_flat"]
    assert report.results["band2"] == {"axis": 2, "mode": "lowpass", "base_width": 4, "frozen_lambda": 1}
    assert report.passed
    assert len(report.tables[0].rows) == 2


def test_decay_fit_conforming_bands_decay() -> None:
    report = decay_fit(
        BandLimitSpec(1, 2, "annulus"),
        BandLimitSpec(2, 2, "lowpass"),
        [2.0, 4.0, 8.0],
        trials=10,
        n=32,
    )
    assert [check.name for check in report.checks] == ["positive_decay"]
    assert report.results["slope"] < 0
    assert report.passed
    medians = [row[1] for row in report.tables[0].rows]
    assert medians[-1] < medians[0]


def test_frozen_band_ignores_the_sweep() -> None:
    band = BandLimitSpec(2, 2, "lowpass", frozen=True)
    assert band.with_lambda(8) is band


def test_decay_fit_argument_checks() -> None:
    band = BandLimitSpec(1, 1)
    with pytest.raises(TrialCountError):
        decay_fit(band, band, [1.0, 2.0], trials=5, n=16)
    with pytest.raises(BandError):
        decay_fit(band, band, [1.0], trials=10, n=16)
