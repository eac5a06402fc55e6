"""Deterministic random data for the experiments.

Every draw comes from a counter-based Philox stream keyed by (seed, role, trial), so the same
seed gives the same spectra whatever order trials run in. Band-limited fields always draw the
full n x n Gaussian array before masking; changing the band therefore reuses the same numbers.
"""

from __future__ import annotations

import logging
from collections.abc import Callable, Iterable
from concurrent.futures import ThreadPoolExecutor, as_completed
from typing import TypeVar

import numpy as np

from harmonic.torus_grid import GridFunction1D, GridFunction2D, check_grid_size, frequencies

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

ROLE_KEYS: dict[str, int] = {
    "f1": 1,
    "f2": 2,
    "f3": 3,
    "f4": 4,
    "g": 5,
    "bitmap": 6,
    "tree": 7,
    "alpha": 8,
    "beta": 9,
    "unit": 10,
    "identity": 11,
}


def stream(seed: int, role: str, trial: int = 0) -> np.random.Generator:
    if role not in ROLE_KEYS:
        raise KeyError(f"unknown random stream role: {role!r}")
    sequence = np.random.SeedSequence([int(seed) & (2**64 - 1), ROLE_KEYS[role], int(trial)])
    return np.random.Generator(np.random.Philox(sequence))


def gaussian_spectrum(n: int, rng: np.random.Generator, mask: np.ndarray) -> GridFunction2D:
    """Grid function whose Fourier coefficients are complex Gaussians on ``mask`` (FFT order)."""
    n = check_grid_size(n)
    draws = rng.standard_normal((2, n, n))
    coeffs = (draws[0] + 1j * draws[1]) / np.sqrt(2.0) * mask
    return GridFunction2D(n, np.fft.ifft2(coeffs) * (n * n))


def gaussian_spectrum_1d(n: int, rng: np.random.Generator, mask: np.ndarray) -> GridFunction1D:
    n = check_grid_size(n)
    draws = rng.standard_normal((2, n))
    coeffs = (draws[0] + 1j * draws[1]) / np.sqrt(2.0) * mask
    return GridFunction1D(n, np.fft.ifft(coeffs) * n)


def box_mask(n: int, radius1: float, radius2: float) -> np.ndarray:
    """Frequencies with |xi1| <= radius1 and |xi2| <= radius2."""
    k = np.abs(frequencies(n))
    return np.outer(k <= radius1, k <= radius2).astype(float)


def lowpass_field(n: int, rng: np.random.Generator, radius: float | None = None) -> GridFunction2D:
    """Smooth random field; the default radius n/4 keeps t^2 shifts away from the Nyquist mode."""
    radius = n / 4 if radius is None else radius
    return gaussian_spectrum(n, rng, box_mask(n, radius, radius))


def lowpass_field_1d(n: int, rng: np.random.Generator, radius: float | None = None) -> GridFunction1D:
    radius = n / 4 if radius is None else radius
    return gaussian_spectrum_1d(n, rng, (np.abs(frequencies(n)) <= radius).astype(float))


def ordered_map(fn: Callable[[T], R], items: Iterable[T], max_workers: int = 1) -> list[R]:
    """Map ``fn`` over ``items`` on a thread pool, returning results in input order."""
    items = list(items)
    if max_workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    results: list[R | None] = [None] * len(items)
    with ThreadPoolExecutor(max_workers=max_workers) as executor:
        future_map = {executor.submit(fn, item): index for index, item in enumerate(items)}
        for future in as_completed(future_map):
            results[future_map[future]] = future.result()
    logger.debug("ordered_map finished %d items on %d workers", len(items), max_workers)
    return results  # type: ignore[return-value]
