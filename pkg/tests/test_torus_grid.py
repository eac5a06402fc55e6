from __future__ import annotations

import numpy as np
import pytest

from harmonic.errors import GridSizeError, LabError, NormExponentError
from harmonic.torus_grid import (
    GridFunction1D,
    GridFunction2D,
    autocorrelation_sides,
    check_grid_size,
    constant,
    diff_fn,
    fiber,
    from_callable,
    from_payload,
    norm_lp,
    norm_lp_1d,
    read_csv,
    shift_eval,
    shift_eval_1d,
    to_payload,
    transform,
    transform_1d,
    write_csv,
)


def _random_grid(n: int, seed: int = 0) -> GridFunction2D:
    rng = np.random.default_rng(seed)
    return GridFunction2D(n, rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)))


@pytest.mark.parametrize("n", [0, 2, 6, 12, 100])
def test_check_grid_size_rejects_bad_sides(n: int) -> None:
    with pytest.raises(GridSizeError):
        check_grid_size(n)


def test_grid_values_are_read_only() -> None:
    f = constant(8, 1.0)
    with pytest.raises(ValueError):
        f.values[0, 0] = 2.0


def test_non_finite_values_rejected() -> None:
    values = np.zeros((4, 4))
    values[1, 2] = np.nan
    with pytest.raises(LabError):
        GridFunction2D(4, values)


def test_transform_round_trip_and_parseval() -> None:
    f = _random_grid(16, seed=3)
    spectrum = transform(f, "forward")
    back = transform(spectrum, "inverse")
    assert np.max(np.abs(back.values - f.values)) < 1e-12
    assert spectrum.energy() == pytest.approx(float(np.mean(np.abs(f.values) ** 2)), rel=1e-12)


def test_transform_direction_checks() -> None:
    f = _random_grid(8)
    with pytest.raises(LabError):
        transform(transform(f, "forward"), "forward")
    with pytest.raises(LabError):
        transform(f, "inverse")


def test_single_mode_coefficient() -> None:
    f = from_callable(16, lambda x, y: np.exp(2j * np.pi * (3 * x - 2 * y)))
    spectrum = transform(f, "forward")
    assert spectrum.coefficient(3, -2) == pytest.approx(1.0, abs=1e-12)
    assert spectrum.coefficient(0, 0) == pytest.approx(0.0, abs=1e-12)


def test_transform_1d_round_trip() -> None:
    rng = np.random.default_rng(1)
    g = GridFunction1D(32, rng.standard_normal(32))
    back = transform_1d(transform_1d(g, "forward"), "inverse")
    assert np.max(np.abs(back.values - g.values)) < 1e-12


def test_shift_is_exact_for_trigonometric_polynomials() -> None:
    n = 16
    f = from_callable(n, lambda x, y: np.cos(2 * np.pi * 2 * x) + np.sin(2 * np.pi * 3 * y))
    t = 0.137
    along_x = shift_eval(f, t, 1)
    along_y = shift_eval(f, t, 2)
    expected_x = from_callable(n, lambda x, y: np.cos(2 * np.pi * 2 * (x + t)) + np.sin(2 * np.pi * 3 * y))
    expected_y = from_callable(n, lambda x, y: np.cos(2 * np.pi * 2 * x) + np.sin(2 * np.pi * 3 * (y + t)))
    assert np.max(np.abs(along_x.values - expected_x.values)) < 1e-12
    assert np.max(np.abs(along_y.values - expected_y.values)) < 1e-12


def test_grid_shift_is_a_roll() -> None:
    g = GridFunction1D(8, np.arange(8.0))
    shifted = shift_eval_1d(g, 3 / 8)
    assert np.array_equal(shifted.values.real, np.roll(np.arange(8.0), -3))


def test_norms_of_constant() -> None:
    f = constant(8, 2.0)
    for p in (1, 2, 3.5, float("inf")):
        assert norm_lp(f, p) == pytest.approx(2.0)
    assert norm_lp_1d(GridFunction1D(4, [0, 0, 0, 4]), 1) == pytest.approx(1.0)


def test_norm_exponent_below_one_rejected() -> None:
    with pytest.raises(NormExponentError):
        norm_lp(constant(4, 1.0), 0.5)


def test_fiber_and_difference_function() -> None:
    f = _random_grid(8, seed=5)
    assert np.array_equal(fiber(f, 1, 3).values, f.values[:, 3])
    assert np.array_equal(fiber(f, 2, 3).values, f.values[3, :])
    d = diff_fn(f, 2 / 8, 1)
    expected = np.roll(f.values, -2, axis=0) * np.conj(f.values)
    assert np.max(np.abs(d.values - expected)) < 1e-12


def test_payload_round_trip_is_bit_exact() -> None:
    f = _random_grid(8, seed=7)
    restored = from_payload(to_payload(f).model_dump(mode="json"))
    assert np.array_equal(restored.values, f.values)


def test_payload_size_mismatch() -> None:
    with pytest.raises(GridSizeError):
        from_payload({"n": 4, "re": [0.0] * 15, "im": [0.0] * 15})


def test_csv_round_trip_is_bit_exact(tmp_path) -> None:
    f = _random_grid(8, seed=11)
    path = tmp_path / "grids" / "f.csv"
    write_csv(f, path)
    restored = read_csv(path)
    assert np.array_equal(restored.values, f.values)


def test_autocorrelation_sides_agree() -> None:
    f = _random_grid(16, seed=2)
    left, right = autocorrelation_sides(f.values)
    assert np.max(np.abs(left - right)) <= 1e-10 * np.max(right)
