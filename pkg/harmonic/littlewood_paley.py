from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from harmonic.errors import BandError
from harmonic.torus_grid import Axis, GridFunction2D, check_grid_size, frequencies
from harmonic.windows import dyadic

BandKind = Literal["delta", "s_partial", "delta_tilde"]
FreqClass = Literal["L", "M", "H"]

# |k1 - k2| at or below this separation counts as high-high interaction
_HIGH_SEPARATION = 100

_KIND_WINDOW = {
    "delta": "annulus_psi",
    "s_partial": "plateau_phi",
    "delta_tilde": "annulus_psi_tilde",
}


@dataclass(frozen=True)
class BandSpec:
    axis: Axis
    j: int
    kind: BandKind = "delta"

    def __post_init__(self) -> None:
        if self.axis not in (1, 2):
            raise BandError(f"axis must be 1 or 2, got {self.axis!r}")
        if self.kind not in _KIND_WINDOW:
            raise BandError(f"unknown band kind: {self.kind!r}")


def band_range(n: int) -> tuple[int, int]:
    """Resolvable scales on an n-grid: j in [0, log2(n) - 1]."""
    n = check_grid_size(n)
    return 0, int(math.log2(n)) - 1


def multiplier_1d(kind: BandKind, j: int, n: int) -> np.ndarray:
    """1D multiplier on integer frequencies in FFT order."""
    if kind not in _KIND_WINDOW:
        raise BandError(f"unknown band kind: {kind!r}")
    return dyadic(_KIND_WINDOW[kind], j)(frequencies(n))


def band_multiplier(spec: BandSpec, n: int) -> np.ndarray:
    return multiplier_1d(spec.kind, spec.j, n)


def apply_multiplier(values: np.ndarray, multiplier: np.ndarray, axis: int) -> np.ndarray:
    """Multiply the spectrum of ``values`` along array ``axis`` by ``multiplier`` (FFT order)."""
    shape = [1] * values.ndim
    shape[axis] = values.shape[axis]
    spectrum = np.fft.fft(values, axis=axis) * np.asarray(multiplier).reshape(shape)
    return np.fft.ifft(spectrum, axis=axis)


def project(values: np.ndarray, axis: Axis, j: int, kind: BandKind = "delta") -> np.ndarray:
    return apply_multiplier(values, multiplier_1d(kind, j, values.shape[axis - 1]), axis - 1)


def apply_band(f: GridFunction2D, spec: BandSpec) -> GridFunction2D:
    return GridFunction2D(f.n, project(f.values, spec.axis, spec.j, spec.kind))


def classify_pair(k1: int, k2: int) -> FreqClass:
    if max(k1, k2) <= 0:
        return "L"
    if abs(k1 - k2) <= _HIGH_SEPARATION:
        return "H"
    return "M"


def square_function(f: GridFunction2D, axis: Axis) -> GridFunction2D:
    """Partial square function (sum_j |Delta_j^(axis) f|^2)^(1/2) over the resolvable scales."""
    lo, hi = band_range(f.n)
    total = np.zeros((f.n, f.n), dtype=float)
    for j in range(lo, hi + 1):
        total += np.abs(project(f.values, axis, j)) ** 2
    return GridFunction2D(f.n, np.sqrt(total))
