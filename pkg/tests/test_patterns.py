from __future__ import annotations

import math

import numpy as np
import pytest

from harmonic.errors import LabError, RangeError, ScaleError
from harmonic.patterns import (
    BitmapSet,
    PatternTriple,
    count_integral,
    dichotomy_run,
    energy_constant,
    lower_bound_check,
    martingale_avg,
    pattern_search,
    verify_triple,
)
from harmonic.torus_grid import GridFunction2D, constant


def _random_bitmap(n: int, seed: int, density: float) -> BitmapSet:
    return BitmapSet(n, np.random.default_rng(seed).random((n, n)) < density)


def _enumerated_count(e: BitmapSet, t_nodes: int) -> float:
    n = e.n
    total = 0
    for k in range(t_nodes):
        t = k / t_nodes
        a, b = math.floor(t * n), math.floor(t * t * n)
        for x in range(n):
            for y in range(n):
                total += e.cells[x, y] and e.cells[(x + a) % n, y] and e.cells[x, (y + b) % n]
    return total / (t_nodes * n * n)


def _enumerated_search(e: BitmapSet, t_min: float, t_nodes: int) -> float | None:
    n = e.n
    for k in range(t_nodes - 1, -1, -1):
        t = k / t_nodes
        if t < t_min:
            return None
        a, b = math.floor(t * n), math.floor(t * t * n)
        for x in range(n):
            for y in range(n):
                if e.cells[x, y] and e.cells[(x + a) % n, y] and e.cells[x, (y + b) % n]:
                    return t
    return None


def test_bitmap_set() -> None:
    e = _random_bitmap(8, 1, 0.5)
    assert e.density == pytest.approx(float(e.cells.mean()))
    assert np.array_equal(BitmapSet.from_grid(e.to_grid()).cells, e.cells)
    with pytest.raises(LabError):
        BitmapSet(8, np.zeros((8, 4), dtype=bool))


def test_martingale_averages() -> None:
    rng = np.random.default_rng(2)
    f = GridFunction2D(16, rng.random((16, 16)))
    for axis in (1, 2):
        for k in range(0, 5):
            once = martingale_avg(f, axis, k)
            twice = martingale_avg(once, axis, k)
            assert np.max(np.abs(twice.values - once.values)) < 1e-14
            assert np.mean(once.values) == pytest.approx(np.mean(f.values), abs=1e-14)
    assert np.array_equal(martingale_avg(f, 1, 4).values, f.values)
    with pytest.raises(ScaleError):
        martingale_avg(f, 1, 5)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_count_integral_matches_enumeration(seed: int) -> None:
    e = _random_bitmap(8, seed, 0.6)
    assert count_integral(e.to_grid()) == pytest.approx(_enumerated_count(e, 16), rel=1e-12)


@pytest.mark.parametrize("seed", [3, 4, 5, 6])
def test_pattern_search_matches_enumeration(seed: int) -> None:
    e = _random_bitmap(16, seed, 0.3)
    found = pattern_search(e, 1 / 16)
    expected = _enumerated_search(e, 1 / 16, 32)
    assert (found.t if found else None) == expected
    if found is not None:
        assert verify_triple(e, found)


def test_pattern_search_extremes() -> None:
    full = BitmapSet(8, np.ones((8, 8), dtype=bool))
    triple = pattern_search(full, 0.125)
    assert triple is not None and triple.t == 15 / 16
    empty = BitmapSet(8, np.zeros((8, 8), dtype=bool))
    assert pattern_search(empty, 0.125) is None
    assert count_integral(empty.to_grid()) == 0.0
    with pytest.raises(LabError):
        pattern_search(full, 0.01)


def test_restricted_count_agrees_with_search() -> None:
    for seed in range(5):
        e = _random_bitmap(16, seed, 0.2)
        restricted = count_integral(e.to_grid(), t_min=0.25)
        assert (restricted > 0) == (pattern_search(e, 0.25) is not None)


def test_verify_triple_wraps() -> None:
    cells = np.zeros((8, 8), dtype=bool)
    cells[7, 6] = cells[1, 6] = cells[7, 0] = True
    assert verify_triple(BitmapSet(8, cells), PatternTriple(x=7, y=6, t=0.25, dx=2, dy=2))


def test_lower_bound() -> None:
    rng = np.random.default_rng(9)
    for k, l in [(0, 0), (1, 2), (3, 3)]:
        bound = lower_bound_check(GridFunction2D(8, rng.random((8, 8))), k, l)
        assert bound.ok and bound.lhs >= bound.rhs
    flat = lower_bound_check(constant(8, 0.5), 2, 1)
    assert flat.lhs == pytest.approx(0.125) and flat.rhs == pytest.approx(0.0625)
    with pytest.raises(RangeError):
        lower_bound_check(constant(8, 1.5), 1, 1)
    with pytest.raises(RangeError):
        lower_bound_check(GridFunction2D(8, np.full((8, 8), 0.5 + 0.1j)), 1, 1)


def test_dichotomy_energy_bound() -> None:
    e = _random_bitmap(32, 7, 0.4)
    f = e.to_grid()
    run = dichotomy_run(f, 1, 2, 4)
    assert run.truncated
    assert [record.k_l for record in run.records] == [1, 2]
    assert len(run.table_rows()) == 2
    total = sum(record.increment**2 for record in run.records)
    assert total <= energy_constant(1, 2, 4, 32) * float(np.mean(np.abs(f.values) ** 2))
    assert all(record.branch in ("count_large", "increment_large", "neither") for record in run.records)


def test_dichotomy_scale_checks() -> None:
    f = constant(16, 0.5)
    with pytest.raises(ScaleError):
        dichotomy_run(f, 0, 2, 3)
    with pytest.raises(ScaleError):
        dichotomy_run(f, 1, 1, 3)
    with pytest.raises(ScaleError):
        dichotomy_run(f, 5, 2, 3)
    untruncated = dichotomy_run(f, 1, 2, 1)
    assert not untruncated.truncated and len(untruncated.records) == 1
