from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from harmonic.errors import LabError, RangeError, ScaleError
from harmonic.torus_grid import Axis, GridFunction2D, check_grid_size, frequencies
from harmonic.windows import window, window_fourier
from models.dichotomy import DichotomyRecord

logger = logging.getLogger(__name__)

# slack for the exact lower bound and for values just outside [0, 1]
_BOUND_SLACK = 1e-12


@dataclass(frozen=True, eq=False)
class BitmapSet:
    """A union of grid cells; ``cells[i, j]`` is the cell [i/n, (i+1)/n) x [j/n, (j+1)/n)."""

    n: int
    cells: np.ndarray

    def __post_init__(self) -> None:
        n = check_grid_size(self.n)
        cells = np.array(self.cells, dtype=bool)
        if cells.shape != (n, n):
            raise LabError(f"bitmap must be {n}x{n}, got {cells.shape}")
        cells.flags.writeable = False
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "cells", cells)

    @property
    def density(self) -> float:
        return float(self.cells.mean())

    def to_grid(self) -> GridFunction2D:
        return GridFunction2D(self.n, self.cells.astype(float))

    @classmethod
    def from_grid(cls, f: GridFunction2D, threshold: float = 0.5) -> BitmapSet:
        return cls(f.n, f.values.real >= threshold)


def martingale_avg(f: GridFunction2D, axis: Axis, k: int) -> GridFunction2D:
    """E_k along ``axis``: means over dyadic blocks of width 2^-k."""
    if k < 0 or 2**k > f.n:
        raise ScaleError(f"block width 2^-{k} is finer than the grid n={f.n}")
    block = f.n >> k
    values = f.values if axis == 1 else f.values.T
    means = values.reshape(2**k, block, f.n).mean(axis=1, keepdims=True)
    averaged = np.broadcast_to(means, (2**k, block, f.n)).reshape(f.n, f.n)
    return GridFunction2D(f.n, averaged if axis == 1 else averaged.T)


def _t_shifts(n: int, t_nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Cell offsets floor(t n) and floor(t^2 n) at t = k / t_nodes, in exact integer arithmetic."""
    k = np.arange(t_nodes, dtype=np.int64)
    return (k * n) // t_nodes, (k * k * n) // (t_nodes * t_nodes)


def _check_nodes(n: int, t_nodes: int | None) -> int:
    t_nodes = 2 * n if t_nodes is None else int(t_nodes)
    if t_nodes < n:
        raise LabError(f"need at least n={n} t nodes, got {t_nodes}")
    return t_nodes


def count_integral(f: GridFunction2D, t_nodes: int | None = None, t_min: float | None = None) -> float:
    """int f(x, y) f(x + t, y) f(x, y + t^2) over [0, 1]^3 with left-endpoint t nodes and cell lookup."""
    n = f.n
    t_nodes = _check_nodes(n, t_nodes)
    values = f.values.real
    shifts_x, shifts_y = _t_shifts(n, t_nodes)
    total = 0.0
    for index, (a, b) in enumerate(zip(shifts_x, shifts_y)):
        if t_min is not None and index / t_nodes < t_min:
            continue
        total += float(np.sum(values * np.roll(values, -int(a), axis=0) * np.roll(values, -int(b), axis=1)))
    return total / (t_nodes * n * n)


@dataclass(frozen=True)
class PatternTriple:
    x: int
    y: int
    t: float
    dx: int
    dy: int

    @property
    def points(self) -> list[tuple[int, int]]:
        return [(self.x, self.y), (self.x + self.dx, self.y), (self.x, self.y + self.dy)]


def verify_triple(e: BitmapSet, triple: PatternTriple) -> bool:
    return all(bool(e.cells[i % e.n, j % e.n]) for i, j in triple.points)


def pattern_search(e: BitmapSet, t_min: float, t_nodes: int | None = None) -> PatternTriple | None:
    """Largest node t >= t_min with (x, y), (x + t, y), (x, y + t^2) all in ``e``.

    The t nodes and cell offsets are those of :func:`count_integral`, so a positive restricted
    count always has a witness here.
    """
    n = e.n
    if t_min < 1.0 / n:
        raise LabError(f"t_min must be at least 1/n={1.0 / n}, got {t_min}")
    t_nodes = _check_nodes(n, t_nodes)
    cells = e.cells
    shifts_x, shifts_y = _t_shifts(n, t_nodes)
    for index in range(t_nodes - 1, -1, -1):
        t = index / t_nodes
        if t < t_min:
            break
        a, b = int(shifts_x[index]), int(shifts_y[index])
        hits = cells & np.roll(cells, -a, axis=0) & np.roll(cells, -b, axis=1)
        if hits.any():
            x, y = (int(v) for v in np.argwhere(hits)[0])
            triple = PatternTriple(x=x, y=y, t=t, dx=a, dy=b)
            if not verify_triple(e, triple):
                raise LabError(f"pattern witness {triple} failed verification")
            return triple
    return None


@dataclass(frozen=True)
class LowerBound:
    lhs: float
    rhs: float
    ok: bool


def lower_bound_check(f: GridFunction2D, k: int, l: int) -> LowerBound:
    """int f E_k^(1) f E_l^(2) f against (int f)^4 for 0 <= f <= 1."""
    values = f.values
    outside = (values.real < -_BOUND_SLACK) | (values.real > 1 + _BOUND_SLACK)
    if np.any(np.abs(values.imag) > _BOUND_SLACK) or np.any(outside):
        raise RangeError("lower bound check needs real values in [0, 1]")
    real = values.real
    ek = martingale_avg(f, 1, k).values.real
    el = martingale_avg(f, 2, l).values.real
    lhs = float(np.mean(real * ek * el))
    rhs = float(np.mean(real)) ** 4
    return LowerBound(lhs=lhs, rhs=rhs, ok=lhs >= rhs - _BOUND_SLACK)


def _scales(k0: int, m_factor: int, max_iter: int, n: int) -> tuple[list[int], bool]:
    if k0 < 1:
        raise ScaleError(f"k0 must be at least 1, got {k0}")
    if m_factor < 2:
        raise ScaleError(f"scale factor M must be at least 2, got {m_factor}")
    limit = int(math.log2(n))
    if k0 > limit:
        raise ScaleError(f"starting scale 2^-{k0} is finer than the grid n={n}")
    scales = [k0]
    while len(scales) <= max_iter:
        following = scales[-1] * m_factor
        if following > limit:
            return scales, True
        scales.append(following)
    return scales, False


def _mollifier_multiplier(k: int, n: int) -> np.ndarray:
    return window_fourier(window("mollifier_vartheta"), frequencies(n) / 2.0**k).real


def energy_constant(k0: int, m_factor: int, max_iter: int, n: int) -> float:
    """Bound C with sum_l increment_l^2 <= C ||f||_2^2.

    Four times sup_xi sum_l |theta^(2^-k_{l+1} xi) - theta^(2^-k_l xi)|^2: each increment adds two
    fiber norms.
    """
    scales, _ = _scales(k0, m_factor, max_iter, check_grid_size(n))
    multipliers = [_mollifier_multiplier(k, n) for k in scales]
    total = np.zeros(n)
    for coarse, fine in zip(multipliers, multipliers[1:]):
        total += np.abs(fine - coarse) ** 2
    return 4.0 * float(total.max())


@dataclass(frozen=True)
class DichotomyRun:
    records: list[DichotomyRecord]
    truncated: bool
    density: float

    def table_rows(self) -> list[list[object]]:
        return [[r.l, r.k_l, r.count_I, r.increment, r.branch] for r in self.records]


def _l2(values: np.ndarray) -> float:
    return float(np.sqrt(np.mean(np.abs(values) ** 2)))


def dichotomy_run(
    f: GridFunction2D,
    k0: int,
    m_factor: int,
    max_iter: int,
    c: float = 1.0,
    eps: float | None = None,
) -> DichotomyRun:
    """Energy-increment iteration over the scales k_{l+1} = M k_l.

    Each level compares the count with 2^(-k_{l+1} - 10) c eps^4 and the mollifier increment with
    2^-10 c eps^4; eps defaults to the mean of f.
    """
    n = f.n
    scales, truncated = _scales(k0, m_factor, max_iter, n)
    density = float(np.mean(f.values.real)) if eps is None else float(eps)
    count = count_integral(f)
    spectrum_x = np.fft.fft(f.values, axis=0)
    spectrum_y = np.fft.fft(f.values, axis=1)
    multipliers = {k: _mollifier_multiplier(k, n) for k in scales}
    records = []
    for l, (k_l, k_next) in enumerate(zip(scales, scales[1:])):
        diff = multipliers[k_next] - multipliers[k_l]
        along_y = np.fft.ifft(spectrum_y * diff[None, :], axis=1)
        along_x = np.fft.ifft(spectrum_x * diff[:, None], axis=0)
        increment = _l2(along_y) + _l2(along_x)
        count_threshold = 2.0 ** (-k_next - 10) * c * density**4
        increment_threshold = 2.0**-10 * c * density**4
        if count > count_threshold:
            branch = "count_large"
        elif increment > increment_threshold:
            branch = "increment_large"
        else:
            branch = "neither"
        records.append(
            DichotomyRecord(
                l=l,
                k_l=k_l,
                count_I=count,
                increment=increment,
                count_threshold=count_threshold,
                increment_threshold=increment_threshold,
                branch=branch,
                truncated=truncated and l == len(scales) - 2,
            )
        )
    if truncated:
        logger.warning("dichotomy stopped after %d levels: next scale exceeds the grid n=%d", len(records), n)
    return DichotomyRun(records=records, truncated=truncated, density=density)
