from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import integrate

from harmonic.errors import BandError, GridSizeError, LabError, QuadratureError, SymbolError
from harmonic.quadrature import CutoffSpec, QuadratureSpec
from harmonic.sampling import box_mask, gaussian_spectrum, lowpass_field, lowpass_field_1d, stream
from harmonic.singular_ops import (
    SymbolSpec,
    aniso_apply,
    bht_curvature,
    cone_symbol,
    diagonal_embedding,
    domination_coefficients,
    domination_constant,
    domination_grid,
    domination_lhs,
    domination_rhs,
    domination_sweep,
    frequency_component,
    local_form,
    local_t,
    maximal,
    norm_estimate,
    paired_component,
    required_k_window,
    separable_symbol,
    shifted_maximal,
    shifted_maximal_sweep,
    single_scale,
    sw_maximal,
    symbol_estimate,
    symbol_matrix,
    truncated_t,
    unit_symbol,
)
from harmonic.torus_grid import GridFunction1D, GridFunction2D, constant, frequencies, from_callable
from harmonic.windows import cone_constant, window


def test_single_scale_matches_adaptive_quadrature() -> None:
    n, j = 16, 3
    quad = QuadratureSpec()
    f1 = from_callable(n, lambda x, y: np.exp(2j * np.pi * x))
    f2 = from_callable(n, lambda x, y: np.exp(2j * np.pi * y))
    psi = window("annulus_psi")

    def density(t: float) -> complex:
        return 2j * math.sin(2 * math.pi * t) * complex(np.exp(2j * np.pi * t * t)) * float(psi(2.0**j * t)) / t

    lower, upper = 2.0 ** (-j - 1), 2.0 ** (-j + 1)
    re, _ = integrate.quad(lambda t: density(t).real, lower, upper, limit=200, epsabs=1e-14)
    im, _ = integrate.quad(lambda t: density(t).imag, lower, upper, limit=200, epsabs=1e-14)
    value = single_scale(f1, f2, j, quad).values[0, 0]
    assert abs(value - complex(re, im)) <= 1e-4 * abs(complex(re, im))


def test_single_scale_rejects_wide_shells() -> None:
    f = constant(16, 1.0)
    with pytest.raises(QuadratureError):
        single_scale(f, f, 2, QuadratureSpec())
    with pytest.raises(GridSizeError):
        single_scale(f, constant(8, 1.0), 3, QuadratureSpec())


def test_truncated_t_kills_constants() -> None:
    f = constant(16, 2.0)
    assert np.max(np.abs(truncated_t(f, f, QuadratureSpec.for_grid(16)).values)) < 1e-12


def test_maximal_of_constants() -> None:
    f = constant(16, 1.0)
    values = maximal(f, f, QuadratureSpec.for_grid(16)).values
    assert np.allclose(values.real, 1.5, rtol=1e-4)


def test_frequency_classes_reassemble_truncated_t() -> None:
    n = 16
    quad = QuadratureSpec.for_grid(n)
    modes1 = from_callable(n, lambda x, y: np.exp(2j * np.pi * (3 * x + y)) + np.exp(-2j * np.pi * 5 * x))
    modes2 = from_callable(n, lambda x, y: np.exp(2j * np.pi * 2 * y) + np.exp(2j * np.pi * (x - 3 * y)))
    axis1 = from_callable(n, lambda x, y: 0.7 + np.cos(2 * np.pi * 2 * y))
    axis2 = from_callable(n, lambda x, y: 0.3 + np.sin(2 * np.pi * 3 * x))
    f1 = GridFunction2D(n, modes1.values + axis1.values + lowpass_field(n, stream(6, "f1")).values)
    f2 = GridFunction2D(n, modes2.values + axis2.values + lowpass_field(n, stream(6, "f2")).values)
    total = sum(frequency_component(f1, f2, omega, quad).values for omega in ("L", "M", "H"))
    assert np.max(np.abs(total - truncated_t(f1, f2, quad).values)) < 1e-10
    with pytest.raises(BandError):
        frequency_component(f1, f2, "L", quad, k_window=0)


def test_constant_second_input_has_no_high_class() -> None:
    n = 16
    quad = QuadratureSpec.for_grid(n)
    f1 = lowpass_field(n, stream(7, "f1"))
    f2 = constant(n, 2.0)
    assert not np.any(frequency_component(f1, f2, "H", quad).values)
    low_mid = frequency_component(f1, f2, "L", quad).values + frequency_component(f1, f2, "M", quad).values
    assert np.max(np.abs(low_mid - truncated_t(f1, f2, quad).values)) < 1e-10
    assert np.max(np.abs(low_mid)) > 1e-6


def test_paired_components_sum_to_truncated_t() -> None:
    n = 16
    quad = QuadratureSpec.for_grid(n)
    f1 = lowpass_field(n, stream(4, "f1"))
    f2 = lowpass_field(n, stream(4, "f2"))
    w = required_k_window(quad, n)
    total = sum(
        paired_component(f1, f2, (k1, k2), quad).values for k1 in range(-w, w + 1) for k2 in range(-w, w + 1)
    )
    assert np.max(np.abs(total - truncated_t(f1, f2, quad).values)) < 1e-10


def test_paired_component_without_admissible_scale_is_zero() -> None:
    f = constant(8, 1.0)
    out = paired_component(f, f, (100, 100), QuadratureSpec.for_grid(8))
    assert not np.any(out.values)


def test_bht_curvature_is_the_diagonal_restriction() -> None:
    n = 16
    quad = QuadratureSpec.for_grid(n)
    g1 = lowpass_field_1d(n, stream(3, "f1"))
    g2 = lowpass_field_1d(n, stream(3, "f2"))
    lifted = truncated_t(*diagonal_embedding(g1, g2), quad)
    curve = bht_curvature(g1, g2, quad)
    assert np.max(np.abs(lifted.values[:, 0] - curve.values)) < 1e-10
    assert np.max(np.abs(lifted.values[3, 5] - curve.values[8])) < 1e-10


def test_local_form_is_the_mean_of_the_localized_product() -> None:
    n = 16
    quad = QuadratureSpec.for_grid(n)
    zeta = CutoffSpec()
    f1 = lowpass_field(n, stream(1, "f1"))
    f2 = lowpass_field(n, stream(1, "f2"))
    f3 = lowpass_field(n, stream(1, "f3"))
    inner = local_t(f1, f2, zeta, quad)
    assert np.all(inner.values[zeta.spatial(n) == 0] == 0)
    assert local_form(f1, f2, f3, zeta, quad) == pytest.approx(complex(np.mean(inner.values * f3.values)))


def test_shifted_maximal_of_constant_is_flat() -> None:
    g = GridFunction1D(32, np.ones(32))
    assert shifted_maximal_sweep(g, [0.0, 1.0, 7.5, 100.0]) == pytest.approx([1.0] * 4, rel=1e-12)
    with pytest.raises(LabError):
        shifted_maximal(g, 1.0, [])


def test_shifted_maximal_dominates_the_cell_value() -> None:
    rng = np.random.default_rng(0)
    g = GridFunction1D(32, rng.standard_normal(32))
    assert np.all(shifted_maximal(g, 0.0).values.real >= np.abs(g.values) - 1e-12)


def test_domination() -> None:
    terms, log_sum = domination_coefficients(2, 2)
    assert len(terms) == 9 * 17
    assert log_sum > 0
    with pytest.raises(LabError):
        domination_coefficients(0, 2)
    n = 64
    f1 = lowpass_field(n, stream(2, "f1"))
    f2 = gaussian_spectrum(n, stream(2, "f2"), box_mask(n, n / 4, n / 2 - 1))
    c = domination_constant(f1, f2, 1, 2, QuadratureSpec())
    assert math.isfinite(c) and c > 0
    assert np.max(domination_lhs(f1, f2, 1, QuadratureSpec()).values) > 0


def test_domination_needs_the_rescaled_band_on_the_grid() -> None:
    f = lowpass_field(32, stream(2, "f1"))
    with pytest.raises(BandError):
        domination_lhs(f, f, 1, QuadratureSpec())
    assert domination_grid(1, 32) == 64
    assert domination_grid(3, 32) == 256
    assert domination_grid(1, 128) == 128


def test_domination_sweep_uses_one_grid_per_kappa() -> None:
    estimates = domination_sweep([1], trials=2, seed=3, n=32)
    assert [(e.kappa, e.n, len(e.ratios)) for e in estimates] == [(1, 64, 2)]
    assert all(math.isfinite(r) and r > 0 for r in estimates[0].ratios)
    with pytest.raises(LabError):
        domination_sweep([], trials=2, seed=3, n=32)


def test_unit_symbol_gives_the_pointwise_product() -> None:
    n = 16
    f1 = lowpass_field(n, stream(4, "f1"))
    f2 = lowpass_field(n, stream(4, "f2"))
    out = aniso_apply(unit_symbol(), f1, f2)
    assert np.max(np.abs(out.values - f1.values * f2.values)) < 1e-12


def test_aniso_apply_matches_the_double_sum() -> None:
    n = 8
    f1 = from_callable(n, lambda x, y: np.cos(2 * np.pi * (x + 2 * y)))
    f2 = lowpass_field(n, stream(5, "f2"), radius=3)
    m = separable_symbol(1, 1)
    a = np.fft.fft(f1.values, axis=0) / n
    b = np.fft.fft(f2.values, axis=1) / n
    phase = np.exp(2j * np.pi * np.outer(frequencies(n), np.arange(n) / n))
    expected = np.einsum("ab,ay,ax,xb,by->xy", symbol_matrix(m, n), a, phase, b, phase)
    assert np.max(np.abs(aniso_apply(m, f1, f2).values - expected)) < 1e-12


def test_cone_pieces_sum_to_the_constant_product() -> None:
    quad = QuadratureSpec()
    full = cone_symbol(1, 2, "full", quad)
    xi = np.array([3.0, 1.0, -7.0, 10.0])
    eta = np.array([5.0, 40.0, 2.0, -0.3])
    expected = cone_constant(1, 1.0, quad) * cone_constant(2, 1.0, quad)
    assert np.allclose(full(xi, eta), expected, rtol=1e-3)
    first = cone_symbol(1, 2, "first", quad)(xi, eta)
    second = cone_symbol(1, 2, "second", quad)(xi, eta)
    assert np.allclose(first + second, full(xi, eta), rtol=1e-12)
    assert np.all(first >= 0) and np.all(second >= 0)
    with pytest.raises(SymbolError):
        cone_symbol(1, 2, "third")  # type: ignore[arg-type]


def test_non_finite_symbol_rejected() -> None:
    bad = SymbolSpec(alpha=1, beta=1, evaluate=lambda xi, eta: xi / 0.0, name="bad")
    with np.errstate(divide="ignore", invalid="ignore"), pytest.raises(SymbolError):
        bad(np.array([1.0]), np.array([1.0]))


def test_symbol_estimate_of_unit_symbol() -> None:
    ratios = symbol_estimate(unit_symbol(), [(1.0, 1.0), (-3.0, 2.0)])
    assert ratios["0,0"] == pytest.approx(1.0)
    assert all(value == pytest.approx(0.0, abs=1e-9) for key, value in ratios.items() if key != "0,0")


def test_sw_maximal() -> None:
    n = 16
    quad = QuadratureSpec.for_grid(n)
    g = lowpass_field_1d(n, stream(1, "g"))
    out = sw_maximal(g, [0.0, 8.0], quad)
    assert np.all(out.values.real >= np.abs(bht_curvature(g, GridFunction1D(n, np.ones(n)), quad).values) - 1e-10)
    with pytest.raises(LabError):
        sw_maximal(g, [], quad)


def test_norm_estimate_is_deterministic() -> None:
    first = norm_estimate("truncated_t", 16, trials=2, seed=9)
    second = norm_estimate("truncated_t", 16, trials=2, seed=9, max_workers=2)
    assert first.ratios == second.ratios
    assert all(r > 0 for r in first.ratios)
    assert first.ratio_max >= first.ratio_median
    with pytest.raises(LabError):
        norm_estimate("truncated_t", 16, trials=0, seed=9)


def test_domination_rhs_of_constants_is_the_coefficient_sum() -> None:
    terms, _ = domination_coefficients(1, 2, n_window=2)
    ones = constant(16, 1.0)
    rhs = domination_rhs(ones, ones, 1, 2, n_window=2)
    assert np.allclose(rhs.values, sum(term.coefficient for term in terms), rtol=1e-10)
