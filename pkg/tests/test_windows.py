from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import integrate

from harmonic.errors import WindowError
from harmonic.quadrature import QuadratureSpec
from harmonic.windows import (
    build_window,
    cone_constant,
    cone_profile,
    dyadic,
    export_window,
    scale_window,
    smooth_step,
    window,
    window_fourier,
)


def test_smooth_step_limits_and_symmetry() -> None:
    u = np.linspace(-0.5, 1.5, 401)
    s = smooth_step(u)
    assert np.all(s[u <= 0] == 0.0)
    assert np.all(s[u >= 1] == 1.0)
    assert np.all(np.diff(s) >= -1e-15)
    assert np.max(np.abs(s + smooth_step(1.0 - u) - 1.0)) < 1e-12


def test_plateau_and_annulus_supports() -> None:
    phi = window("plateau_phi")
    psi = window("annulus_psi")
    inner = np.linspace(-1.0, 1.0, 101)
    outer = np.array([-3.0, -2.0, 2.0, 2.5])
    assert np.all(phi(inner) == 1.0)
    assert np.all(phi(outer) == 0.0)
    assert np.all(psi(np.linspace(-0.5, 0.5, 51)) == 0.0)
    assert np.all(psi(outer) == 0.0)


def test_dyadic_partition_of_unity() -> None:
    z = np.linspace(-200.0, 200.0, 4001)
    total = window("plateau_phi")(z) + sum(dyadic("annulus_psi", j)(z) for j in range(1, 9))
    assert np.max(np.abs(total - 1.0)) < 1e-12


@pytest.mark.parametrize(
    ("kind", "mass"),
    [("plateau_phi", 3.0), ("mollifier_vartheta", 1.0), ("bump_tau", 1.0), ("spatial_eta", 1.0)],
)
def test_window_masses(kind: str, mass: float) -> None:
    assert window_fourier(window(kind), 0.0).real == pytest.approx(mass, rel=1e-7)


def test_gaussian_transforms_are_closed_form() -> None:
    xi = np.array([0.0, 0.5, 1.25])
    assert np.allclose(window_fourier(window("gauss_g"), xi), np.exp(-np.pi * xi**2), atol=1e-15)
    assert np.allclose(
        window_fourier(window("gauss_h"), xi),
        2j * np.pi * xi * np.exp(-np.pi * xi**2),
        atol=1e-15,
    )


def test_plateau_fourier_matches_adaptive_quadrature() -> None:
    phi = window("plateau_phi")
    xi = 0.3

    def integrand(x: float) -> float:
        return float(phi(x)) * math.cos(2 * math.pi * x * xi)

    expected, _ = integrate.quad(integrand, -2.0, 2.0, points=[-1.0, 1.0], limit=200, epsabs=1e-13)
    assert window_fourier(phi, xi).real == pytest.approx(expected, rel=1e-6)
    assert abs(window_fourier(phi, xi).imag) < 1e-12


@pytest.mark.parametrize(
    ("kind", "params"),
    [
        ("no_such_window", None),
        ("plateau_phi", {"width": 0.1}),
        ("annulus_psi_tilde", {"width": 0.5}),
        ("spatial_eta", {"delta": 0.0}),
    ],
)
def test_build_window_rejects_bad_input(kind: str, params: dict[str, float] | None) -> None:
    with pytest.raises(WindowError):
        build_window(kind, params)


def test_scale_window_conventions() -> None:
    g = window("gauss_g")
    x = np.linspace(-20.0, 20.0, 40001)
    dx = x[1] - x[0]
    l1 = scale_window(g, 2.0, center=1.0, convention="l1_dilate")
    lp = scale_window(g, 2.0, center=1.0)
    assert float(np.sum(l1(x)) * dx) == pytest.approx(1.0, rel=1e-9)
    assert float(lp(1.0)) == pytest.approx(1.0)
    with pytest.raises(WindowError):
        scale_window(g, 0.0)
    with pytest.raises(WindowError):
        scale_window(g, 1.0, convention="other")  # type: ignore[arg-type]


def test_export_window_samples_support() -> None:
    export = export_window(window("bump_tau"))
    assert (export.lower, export.upper) == (0.5, 2.0)
    assert len(export.nodes) == len(export.values) == 16384
    assert export.values[0] == 0.0 and export.values[-1] == 0.0
    unbounded = export_window(window("decay_theta"), nodes=33)
    assert unbounded.lower < 0 < unbounded.upper


def test_cone_constant_is_scale_free() -> None:
    quad = QuadratureSpec()
    c = cone_constant(2, 1.0, quad)
    assert c > 0
    assert cone_constant(2, 3.0, quad) == pytest.approx(c, rel=1e-10)
    assert cone_constant(2, -17.5, quad) == pytest.approx(c, rel=1e-10)
    assert cone_constant(1, 1.0, quad) == pytest.approx(2 * c, rel=1e-12)
    with pytest.raises(WindowError):
        cone_constant(1, 0.0, quad)


def test_cone_profile_matches_constant() -> None:
    quad = QuadratureSpec()
    profile, constant = cone_profile(1, quad)
    assert constant == pytest.approx(cone_constant(1, 1.0, quad), rel=1e-12)
    assert float(profile(0.1)) == pytest.approx(constant, rel=1e-12)
    assert float(profile(5.0)) == pytest.approx(0.0, abs=1e-15)
    values = profile(np.linspace(0.5, 2.0, 50))
    assert np.all(np.diff(values) <= 1e-9)
