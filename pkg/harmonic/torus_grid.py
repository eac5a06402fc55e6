from __future__ import annotations

import csv
import math
from collections.abc import Callable
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np

from harmonic.errors import GridSizeError, LabError, NormExponentError
from models.grid import GridPayload


Axis = Literal[1, 2]
Direction = Literal["forward", "inverse"]

# t*n within this distance of an integer is treated as a grid shift
_ROLL_TOLERANCE = 1e-12


def check_grid_size(n: int) -> int:
    if not isinstance(n, (int, np.integer)) or n < 4 or (int(n) & (int(n) - 1)) != 0:
        raise GridSizeError(f"grid side must be a power of two >= 4, got {n!r}")
    return int(n)


def _frozen(values: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    array = np.array(values, dtype=np.complex128, copy=True)
    if array.shape != shape:
        array = array.reshape(shape)
    if not np.all(np.isfinite(array)):
        raise LabError("grid values must be finite")
    array.flags.writeable = False
    return array


@dataclass(frozen=True, eq=False)
class GridFunction2D:
    """Samples on the periodic unit square; ``values[i, j]`` sits at (i/n, j/n)."""

    n: int
    values: np.ndarray

    def __post_init__(self) -> None:
        n = check_grid_size(self.n)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "values", _frozen(self.values, (n, n)))

    @property
    def real(self) -> np.ndarray:
        return self.values.real

    def mean(self) -> complex:
        return complex(self.values.mean())


@dataclass(frozen=True, eq=False)
class GridFunction1D:
    n: int
    values: np.ndarray

    def __post_init__(self) -> None:
        n = check_grid_size(self.n)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "values", _frozen(self.values, (n,)))

    def mean(self) -> complex:
        return complex(self.values.mean())


@dataclass(frozen=True, eq=False)
class Spectrum2D:
    """Fourier coefficients with ``coeffs[a, b]`` at frequency (a - n/2, b - n/2)."""

    n: int
    coeffs: np.ndarray

    def __post_init__(self) -> None:
        n = check_grid_size(self.n)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "coeffs", _frozen(self.coeffs, (n, n)))

    def coefficient(self, xi1: int, xi2: int) -> complex:
        half = self.n // 2
        return complex(self.coeffs[(xi1 + half) % self.n, (xi2 + half) % self.n])

    def energy(self) -> float:
        return float(np.sum(np.abs(self.coeffs) ** 2))


@dataclass(frozen=True, eq=False)
class Spectrum1D:
    n: int
    coeffs: np.ndarray

    def __post_init__(self) -> None:
        n = check_grid_size(self.n)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "coeffs", _frozen(self.coeffs, (n,)))

    def coefficient(self, xi: int) -> complex:
        return complex(self.coeffs[(xi + self.n // 2) % self.n])


def frequencies(n: int) -> np.ndarray:
    """Integer frequencies in FFT order, covering [-n/2, n/2)."""
    return np.fft.fftfreq(n, d=1.0 / n)


def centered_frequencies(n: int) -> np.ndarray:
    return np.arange(-(n // 2), n - n // 2, dtype=float)


def zeros(n: int) -> GridFunction2D:
    return GridFunction2D(n, np.zeros((n, n), dtype=np.complex128))


def constant(n: int, value: complex) -> GridFunction2D:
    return GridFunction2D(n, np.full((n, n), value, dtype=np.complex128))


def from_callable(n: int, fn: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> GridFunction2D:
    coords = np.arange(n) / n
    x, y = np.meshgrid(coords, coords, indexing="ij")
    return GridFunction2D(n, np.broadcast_to(fn(x, y), (n, n)))


def from_callable_1d(n: int, fn: Callable[[np.ndarray], np.ndarray]) -> GridFunction1D:
    return GridFunction1D(n, np.broadcast_to(fn(np.arange(n) / n), (n,)))


def fiber(f: GridFunction2D, axis: Axis, index: int) -> GridFunction1D:
    """Restriction along ``axis`` with the other coordinate fixed at ``index``."""
    if axis == 1:
        return GridFunction1D(f.n, f.values[:, index % f.n])
    return GridFunction1D(f.n, f.values[index % f.n, :])


def transform(
    f: GridFunction2D | Spectrum2D,
    direction: Direction = "forward",
) -> Spectrum2D | GridFunction2D:
    if direction == "forward":
        if not isinstance(f, GridFunction2D):
            raise LabError("forward transform expects a GridFunction2D")
        coeffs = np.fft.fftshift(np.fft.fft2(f.values)) / (f.n * f.n)
        return Spectrum2D(f.n, coeffs)
    if direction == "inverse":
        if not isinstance(f, Spectrum2D):
            raise LabError("inverse transform expects a Spectrum2D")
        values = np.fft.ifft2(np.fft.ifftshift(f.coeffs)) * (f.n * f.n)
        return GridFunction2D(f.n, values)
    raise LabError(f"unknown transform direction: {direction!r}")


def transform_1d(
    f: GridFunction1D | Spectrum1D,
    direction: Direction = "forward",
) -> Spectrum1D | GridFunction1D:
    if direction == "forward":
        if not isinstance(f, GridFunction1D):
            raise LabError("forward transform expects a GridFunction1D")
        return Spectrum1D(f.n, np.fft.fftshift(np.fft.fft(f.values)) / f.n)
    if direction == "inverse":
        if not isinstance(f, Spectrum1D):
            raise LabError("inverse transform expects a Spectrum1D")
        return GridFunction1D(f.n, np.fft.ifft(np.fft.ifftshift(f.coeffs)) * f.n)
    raise LabError(f"unknown transform direction: {direction!r}")


def _grid_shift(n: int, t: float) -> int | None:
    scaled = t * n
    nearest = round(scaled)
    if abs(scaled - nearest) <= _ROLL_TOLERANCE:
        return int(nearest)
    return None


def shift_array(values: np.ndarray, t: float, axis: int) -> np.ndarray:
    """Trigonometric interpolant of ``values`` evaluated at x + t along array ``axis``."""
    n = values.shape[axis]
    t = float(t) % 1.0
    steps = _grid_shift(n, t)
    if steps is not None:
        return np.roll(values, -steps, axis=axis)
    shape = [1] * values.ndim
    shape[axis] = n
    phase = np.exp(2j * np.pi * frequencies(n) * t).reshape(shape)
    return np.fft.ifft(np.fft.fft(values, axis=axis) * phase, axis=axis)


def shift_stack(values: np.ndarray, shifts: np.ndarray, axis: int) -> np.ndarray:
    """Shifted copies of ``values``, one per entry of ``shifts``; result has a leading node axis."""
    n = values.shape[axis]
    shifts = np.asarray(shifts, dtype=float).reshape(-1) % 1.0
    spectrum = np.fft.fft(values, axis=axis)
    shape = [shifts.size] + [1] * values.ndim
    shape[axis + 1] = n
    phases = np.exp(2j * np.pi * np.outer(shifts, frequencies(n))).reshape(shape)
    return np.fft.ifft(spectrum[None, ...] * phases, axis=axis + 1)


def shift_eval(f: GridFunction2D, t: float, axis: Axis) -> GridFunction2D:
    return GridFunction2D(f.n, shift_array(f.values, t, axis - 1))


def shift_eval_1d(g: GridFunction1D, t: float) -> GridFunction1D:
    return GridFunction1D(g.n, shift_array(g.values, t, 0))


def diff_fn(f: GridFunction2D, s: float, axis: Axis) -> GridFunction2D:
    """Difference function f(. + s e_axis) times conj(f)."""
    return GridFunction2D(f.n, shift_array(f.values, s, axis - 1) * np.conj(f.values))


def _check_exponent(p: float) -> float:
    p = float(p)
    if math.isnan(p) or p < 1:
        raise NormExponentError(f"norm exponent must be >= 1 or inf, got {p!r}")
    return p


def _riemann_norm(values: np.ndarray, p: float) -> float:
    p = _check_exponent(p)
    magnitudes = np.abs(values)
    if math.isinf(p):
        return float(magnitudes.max())
    return float(np.mean(magnitudes**p) ** (1.0 / p))


def norm_lp(f: GridFunction2D, p: float) -> float:
    return _riemann_norm(f.values, p)


def norm_lp_1d(g: GridFunction1D, p: float) -> float:
    return _riemann_norm(g.values, p)


def autocorrelation_sides(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Both sides of the discrete autocorrelation identity along the first array axis.

    Left: (1/n) sum over grid shifts s of |FFT_x(D_s f)(xi)|^2.
    Right: sum over xi' of |c(xi + xi')|^2 |c(xi')|^2 with cyclic frequency indices.
    Arrays are indexed by xi in FFT order, followed by any trailing axes of ``values``.
    """
    n = values.shape[0]
    left = np.zeros(values.shape, dtype=float)
    conj = np.conj(values)
    for m in range(n):
        shifted = np.roll(values, -m, axis=0)
        left += np.abs(np.fft.fft(shifted * conj, axis=0) / n) ** 2
    left /= n

    power = np.abs(np.fft.fft(values, axis=0) / n) ** 2
    right = np.stack([np.sum(np.roll(power, -xi, axis=0) * power, axis=0) for xi in range(n)])
    return left, right


def to_payload(f: GridFunction2D) -> GridPayload:
    flat = f.values.reshape(-1)
    return GridPayload(
        n=f.n,
        re=[float(v) for v in flat.real],
        im=[float(v) for v in flat.imag],
    )


def from_payload(payload: GridPayload | dict) -> GridFunction2D:
    if not isinstance(payload, GridPayload):
        payload = GridPayload.model_validate(payload)
    n = check_grid_size(payload.n)
    if len(payload.re) != n * n or len(payload.im) != n * n:
        raise GridSizeError(f"payload holds {len(payload.re)} samples, expected {n * n}")
    values = np.asarray(payload.re, dtype=float) + 1j * np.asarray(payload.im, dtype=float)
    return GridFunction2D(n, values.reshape(n, n))


def write_csv(f: GridFunction2D, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["i", "j", "re", "im"])
        for i in range(f.n):
            for j in range(f.n):
                value = f.values[i, j]
                writer.writerow([i, j, repr(float(value.real)), repr(float(value.imag))])


def read_csv(path: Path) -> GridFunction2D:
    with path.open("r", encoding="utf-8", newline="") as handle:
        rows = list(csv.DictReader(handle))
    n = math.isqrt(len(rows))
    if n * n != len(rows):
        raise GridSizeError(f"CSV holds {len(rows)} samples, not a square grid")
    values = np.zeros((n, n), dtype=np.complex128)
    for row in rows:
        values[int(row["i"]), int(row["j"])] = complex(float(row["re"]), float(row["im"]))
    return GridFunction2D(n, values)
