from __future__ import annotations

import numpy as np
import pytest

from harmonic.errors import BandError
from harmonic.littlewood_paley import (
    BandSpec,
    apply_band,
    band_range,
    classify_pair,
    multiplier_1d,
    project,
    square_function,
)
from harmonic.torus_grid import GridFunction2D, from_callable, norm_lp


def _random_grid(n: int, seed: int) -> GridFunction2D:
    rng = np.random.default_rng(seed)
    return GridFunction2D(n, rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)))


def test_band_range() -> None:
    assert band_range(32) == (0, 4)
    assert band_range(4) == (0, 1)


def test_partial_sums_telescope() -> None:
    n = 64
    for a in range(0, 4):
        for b in range(a + 1, 6):
            expected = sum(multiplier_1d("delta", j, n) for j in range(a + 1, b + 1))
            diff = multiplier_1d("s_partial", b, n) - multiplier_1d("s_partial", a, n)
            assert np.max(np.abs(diff - expected)) < 1e-14


def test_bands_reassemble_a_pure_mode() -> None:
    n = 64
    f = from_callable(n, lambda x, y: np.exp(2j * np.pi * (12 * x + 5 * y)))
    lo, hi = band_range(n)
    total = sum(project(f.values, 1, j) for j in range(lo, hi + 1))
    assert np.max(np.abs(total - f.values)) < 1e-12
    assert np.max(np.abs(apply_band(f, BandSpec(2, 0)).values)) < 1e-12


def test_square_function_is_bounded_by_the_function() -> None:
    f = _random_grid(32, seed=4)
    for axis in (1, 2):
        sq = square_function(f, axis)
        assert np.all(sq.values.imag == 0)
        assert norm_lp(sq, 2) <= norm_lp(f, 2) * (1 + 1e-12)


@pytest.mark.parametrize(
    ("k1", "k2", "expected"),
    [(0, 0, "L"), (-3, -7, "L"), (3, 3, "H"), (0, 100, "H"), (2, 200, "M"), (300, 1, "M")],
)
def test_classify_pair(k1: int, k2: int, expected: str) -> None:
    assert classify_pair(k1, k2) == expected


def test_band_spec_validation() -> None:
    with pytest.raises(BandError):
        BandSpec(3, 0)  # type: ignore[arg-type]
    with pytest.raises(BandError):
        BandSpec(1, 0, "wide")  # type: ignore[arg-type]
    with pytest.raises(BandError):
        multiplier_1d("wide", 0, 8)  # type: ignore[arg-type]
