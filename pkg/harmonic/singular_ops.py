from __future__ import annotations

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass, field
from functools import partial
from typing import Literal

import numpy as np

from harmonic.errors import BandError, GridSizeError, LabError, QuadratureError, SymbolError
from harmonic.littlewood_paley import FreqClass, apply_multiplier, band_range, classify_pair, multiplier_1d, project
from harmonic.quadrature import CutoffSpec, QuadratureSpec, shell_nodes, temporal_count
from harmonic.sampling import box_mask, gaussian_spectrum, lowpass_field, lowpass_field_1d, ordered_map, stream
from harmonic.torus_grid import (
    GridFunction1D,
    GridFunction2D,
    check_grid_size,
    frequencies,
    norm_lp,
    norm_lp_1d,
    shift_stack,
)
from harmonic.windows import cone_profile, dyadic, log_panels, window

logger = logging.getLogger(__name__)

OperatorName = Literal["truncated_t", "maximal", "bht_curvature", "sw_maximal", "cone_paraproduct"]

# shifted copies held in memory at once: nodes * n * n complex values
_STACK_BUDGET = 1 << 20

# modulation set for the Stein-Wainger norm sweep
SW_FREQUENCIES = [4.0 * m for m in range(64)]

# the domination check runs T_0 on the unit torus read as [0, 8) x [0, 16)
DOMINATION_PERIODS = (8, 16)
DOMINATION_N = 2


def _same_grid(*fs: GridFunction2D | GridFunction1D) -> int:
    sizes = {f.n for f in fs}
    if len(sizes) != 1:
        raise GridSizeError(f"inputs live on different grids: {sorted(sizes)}")
    return sizes.pop()


def _check_shell(j: int) -> None:
    # the shell 2^{-j} [1/2, 2] must stay inside half a period
    if j < 3:
        raise QuadratureError(f"shell at scale j={j} is wider than the torus; need j >= 3")


def _chunk_size(n: int, ndim: int) -> int:
    per_node = n**ndim
    return max(1, _STACK_BUDGET // per_node)


def _odd_even_sums(
    v1: np.ndarray,
    v2: np.ndarray,
    t: np.ndarray,
    odd_weights: np.ndarray | None,
    even_weights: np.ndarray | None,
    curvature: float = 1.0,
) -> tuple[np.ndarray, np.ndarray]:
    """sum_k w_k [F(t_k) - F(-t_k)] and sum_k w_k [F(t_k) + F(-t_k)] with F(t) = v1(x+t, y) v2(x, y+c t^2)."""
    n = v1.shape[0]
    odd = np.zeros(v1.shape, dtype=np.complex128)
    even = np.zeros(v1.shape, dtype=np.complex128)
    step = _chunk_size(n, 2)
    for start in range(0, t.size, step):
        block = t[start : start + step]
        second = shift_stack(v2, curvature * block**2, axis=1)
        plus = shift_stack(v1, block, axis=0) * second
        minus = shift_stack(v1, -block, axis=0) * second
        if odd_weights is not None:
            w = odd_weights[start : start + step]
            odd += np.tensordot(w, plus - minus, axes=(0, 0))
        if even_weights is not None:
            w = even_weights[start : start + step]
            even += np.tensordot(w, plus + minus, axes=(0, 0))
    return odd, even


def single_scale(f1: GridFunction2D, f2: GridFunction2D, j: int, quad: QuadratureSpec) -> GridFunction2D:
    """T_j(f1, f2)(x, y) = int f1(x+t, y) f2(x, y+t^2) psi(2^j t) dt/t over both signs of t."""
    n = _same_grid(f1, f2)
    _check_shell(j)
    nodes = shell_nodes(quad, j, j)
    odd, _ = _odd_even_sums(f1.values, f2.values, nodes.t, nodes.scale_weights(j), None)
    return GridFunction2D(n, odd)


def truncated_t(f1: GridFunction2D, f2: GridFunction2D, quad: QuadratureSpec) -> GridFunction2D:
    n = _same_grid(f1, f2)
    _check_shell(quad.j_min)
    nodes = shell_nodes(quad)
    odd, _ = _odd_even_sums(f1.values, f2.values, nodes.t, nodes.merged, None)
    return GridFunction2D(n, odd)


def _band_multiplier(i: int, n: int) -> np.ndarray:
    """Delta_i for resolvable i; index lo - 1 stands for the mean mode xi = 0."""
    lo, _ = band_range(n)
    if i == lo - 1:
        return multiplier_1d("s_partial", lo - 1, n)
    return multiplier_1d("delta", i, n)


def _band_indices(n: int) -> range:
    lo, hi = band_range(n)
    return range(lo - 1, hi + 1)


def _pair_class(i1: int, i2: int, j: int, n: int) -> FreqClass:
    # the mean mode sits below every band, so its k counts as -infinity
    lo, _ = band_range(n)
    mean1, mean2 = i1 == lo - 1, i2 == lo - 1
    if mean1 and mean2:
        return "L"
    if mean1:
        return "L" if i2 - 2 * j <= 0 else "M"
    if mean2:
        return "L" if i1 - j <= 0 else "M"
    return classify_pair(i1 - j, i2 - 2 * j)


def admissible_scales(k: tuple[int, int], quad: QuadratureSpec, n: int) -> list[int]:
    """Scales j for which both bands j + k1 and 2j + k2 exist on the grid, the mean mode included."""
    bands = _band_indices(n)
    k1, k2 = k
    return [j for j in quad.scales if j + k1 in bands and 2 * j + k2 in bands]


def paired_component(
    f1: GridFunction2D,
    f2: GridFunction2D,
    k: tuple[int, int],
    quad: QuadratureSpec,
) -> GridFunction2D:
    n = _same_grid(f1, f2)
    scales = admissible_scales(k, quad, n)
    if not scales:
        logger.warning("paired component k=%s has no admissible scale on n=%d; returning zero", k, n)
        return GridFunction2D(n, np.zeros((n, n), dtype=np.complex128))
    total = np.zeros((n, n), dtype=np.complex128)
    for j in scales:
        g1 = GridFunction2D(n, apply_multiplier(f1.values, _band_multiplier(j + k[0], n), 0))
        g2 = GridFunction2D(n, apply_multiplier(f2.values, _band_multiplier(2 * j + k[1], n), 1))
        total += single_scale(g1, g2, j, quad).values
    return GridFunction2D(n, total)


def required_k_window(quad: QuadratureSpec, n: int) -> int:
    bands = _band_indices(n)
    lo, hi = bands[0], bands[-1]
    widest = 0
    for j in quad.scales:
        widest = max(widest, abs(lo - j), abs(hi - j), abs(lo - 2 * j), abs(hi - 2 * j))
    return widest


def frequency_component(
    f1: GridFunction2D,
    f2: GridFunction2D,
    omega: FreqClass,
    quad: QuadratureSpec,
    k_window: int | None = None,
) -> GridFunction2D:
    """Sum of paired components over the class ``omega`` with |k| <= k_window.

    Bands of f2 sharing (j, i1) are merged into one multiplier before the t-quadrature. The mean mode
    of either input joins as the band below the resolvable range: L against a low band, M otherwise.
    """
    n = _same_grid(f1, f2)
    if omega not in ("L", "M", "H"):
        raise BandError(f"unknown frequency class: {omega!r}")
    needed = required_k_window(quad, n)
    if k_window is None:
        k_window = needed
    elif k_window < needed:
        raise BandError(f"k_window={k_window} leaves band pairs unclassified; need at least {needed}")
    bands = _band_indices(n)
    total = np.zeros((n, n), dtype=np.complex128)
    for j in quad.scales:
        _check_shell(j)
        for i1 in bands:
            if abs(i1 - j) > k_window:
                continue
            merged = np.zeros(n, dtype=float)
            for i2 in bands:
                if abs(i2 - 2 * j) <= k_window and _pair_class(i1, i2, j, n) == omega:
                    merged += _band_multiplier(i2, n)
            if not np.any(merged):
                continue
            g1 = GridFunction2D(n, apply_multiplier(f1.values, _band_multiplier(i1, n), 0))
            g2 = GridFunction2D(n, apply_multiplier(f2.values, merged, 1))
            total += single_scale(g1, g2, j, quad).values
    return GridFunction2D(n, total)


def local_t(
    f1: GridFunction2D,
    f2: GridFunction2D,
    zeta: CutoffSpec,
    quad: QuadratureSpec,
) -> GridFunction2D:
    """T_loc(f1, f2)(x, y) = int f1(x+t, y) f2(x, y+t^2) zeta(x, y, t) dt."""
    n = _same_grid(f1, f2)
    t, weights = zeta.temporal_nodes(temporal_count(quad, n))
    keep = weights != 0.0
    t, weights = t[keep], weights[keep]
    total = np.zeros((n, n), dtype=np.complex128)
    step = _chunk_size(n, 2)
    for start in range(0, t.size, step):
        block = t[start : start + step]
        product = shift_stack(f1.values, block, axis=0) * shift_stack(f2.values, block**2, axis=1)
        total += np.tensordot(weights[start : start + step], product, axes=(0, 0))
    return GridFunction2D(n, total * zeta.spatial(n))


def local_form(
    f1: GridFunction2D,
    f2: GridFunction2D,
    f3: GridFunction2D,
    zeta: CutoffSpec,
    quad: QuadratureSpec,
) -> complex:
    n = _same_grid(f1, f2, f3)
    inner = local_t(f1, f2, zeta, quad)
    return complex(np.sum(inner.values * f3.values) / (n * n))


def maximal_scale(f1: GridFunction2D, f2: GridFunction2D, j: int, quad: QuadratureSpec) -> GridFunction2D:
    """M_j(f1, f2)(x, y) = int f1(x+t, y) f2(x, y+t^2) psi(2^j t) 2^j dt."""
    n = _same_grid(f1, f2)
    _check_shell(j)
    nodes = shell_nodes(quad, j, j)
    weights = nodes.scale_weights(j) * (2.0**j) * nodes.t
    _, even = _odd_even_sums(f1.values, f2.values, nodes.t, None, weights)
    return GridFunction2D(n, even)


def maximal(f1: GridFunction2D, f2: GridFunction2D, quad: QuadratureSpec) -> GridFunction2D:
    n = _same_grid(f1, f2)
    a1 = GridFunction2D(n, np.abs(f1.values))
    a2 = GridFunction2D(n, np.abs(f2.values))
    best = np.zeros((n, n), dtype=float)
    for j in quad.scales:
        best = np.maximum(best, np.abs(maximal_scale(a1, a2, j, quad).values))
    return GridFunction2D(n, best)


def default_s_range(n: int) -> list[int]:
    return list(range(-int(math.log2(n)), 0))


def _shifted_maximal_array(values: np.ndarray, sigma: float, s_range: list[int], axis: int) -> np.ndarray:
    """Shifted dyadic maximal function of the cell function |values| along array ``axis``."""
    magnitudes = np.moveaxis(np.abs(np.asarray(values)), axis, 0)
    n = magnitudes.shape[0]
    cumulative = np.concatenate([np.zeros((1,) + magnitudes.shape[1:]), np.cumsum(magnitudes, axis=0)]) / n
    total = cumulative[-1]
    trailing = (1,) * (magnitudes.ndim - 1)

    def primitive(u: np.ndarray) -> np.ndarray:
        # int_0^u |g| for the periodic cell function
        scaled = u * n
        whole = np.floor(scaled / n)
        rem = scaled - whole * n
        cell = np.minimum(np.floor(rem).astype(np.int64), n - 1)
        frac = (rem - cell).reshape((-1,) + trailing)
        within = cumulative[cell] + frac * magnitudes[cell] / n
        return whole.reshape((-1,) + trailing) * total + within

    x = np.arange(n) / n
    best = np.zeros(magnitudes.shape, dtype=float)
    for s in s_range:
        length = 2.0**s
        a = sigma * length
        average = (primitive(x + a + length) - primitive(x + a)) / length
        best = np.maximum(best, average)
    return np.moveaxis(best, 0, axis)


def shifted_maximal(g: GridFunction1D, sigma: float, s_range: list[int] | None = None) -> GridFunction1D:
    """sup_s 2^{-s} int_{sigma 2^s}^{(sigma+1) 2^s} |g(x+t)| dt with g constant on cells."""
    s_range = default_s_range(g.n) if s_range is None else list(s_range)
    if not s_range:
        raise LabError("shifted maximal function needs a nonempty scale range")
    return GridFunction1D(g.n, _shifted_maximal_array(g.values, float(sigma), s_range, 0))


def shifted_maximal_sweep(
    g: GridFunction1D,
    sigmas: list[float],
    s_range: list[int] | None = None,
) -> list[float]:
    """Ratios ||M_sigma g||_2 / ||g||_2 over ``sigmas``."""
    base = norm_lp_1d(g, 2)
    if base == 0:
        return [0.0 for _ in sigmas]
    return [norm_lp_1d(shifted_maximal(g, s, s_range), 2) / base for s in sigmas]


@dataclass(frozen=True)
class DominationTerm:
    l: int
    n_shift: int
    coefficient: float
    sigma: float


def domination_coefficients(
    kappa: int,
    N: int,
    l_window: int | None = None,
    n_window: int = 4,
) -> tuple[list[DominationTerm], float]:
    """Terms a = (1+|n|)^{-N} 2^{-kappa} with shifts sigma = n/8 + l^2 2^{-kappa+3}, and sum a log(2+|sigma|)."""
    if kappa < 1:
        raise LabError(f"kappa must be a positive integer, got {kappa}")
    l_window = 2 ** (kappa + 1) if l_window is None else l_window
    terms = []
    for n_shift in range(-n_window, n_window + 1):
        weight = (1.0 + abs(n_shift)) ** (-N) * 2.0 ** (-kappa)
        for l in range(-l_window, l_window + 1):
            sigma = n_shift / 8.0 + l * l * 2.0 ** (-kappa + 3)
            terms.append(DominationTerm(l=l, n_shift=n_shift, coefficient=weight, sigma=sigma))
    log_sum = sum(term.coefficient * math.log(2.0 + abs(term.sigma)) for term in terms)
    return terms, log_sum


def domination_rhs(
    f1: GridFunction2D,
    f2: GridFunction2D,
    kappa: int,
    N: int,
    l_window: int | None = None,
    n_window: int = 4,
    s_range: list[int] | None = None,
) -> GridFunction2D:
    n = _same_grid(f1, f2)
    s_range = default_s_range(n) if s_range is None else list(s_range)
    terms, _ = domination_coefficients(kappa, N, l_window, n_window)
    first: dict[int, np.ndarray] = {}
    second: dict[float, np.ndarray] = {}
    total = np.zeros((n, n), dtype=float)
    for term in terms:
        if term.l not in first:
            first[term.l] = _shifted_maximal_array(f1.values, float(term.l), s_range, 0)
        if term.sigma not in second:
            second[term.sigma] = _shifted_maximal_array(f2.values, term.sigma, s_range, 1)
        total += term.coefficient * first[term.l] * second[term.sigma]
    return GridFunction2D(n, total)


def domination_grid(kappa: int, n: int) -> int:
    """Smallest grid of at least ``n`` cells on which Delta_kappa survives the rescaling to unit scale."""
    n = check_grid_size(n)
    if kappa < 1:
        raise LabError(f"kappa must be a positive integer, got {kappa}")
    y_period = DOMINATION_PERIODS[1]
    return max(n, 2 ** (kappa + int(math.log2(y_period)) + 1))


def domination_lhs(f1: GridFunction2D, f2: GridFunction2D, kappa: int, quad: QuadratureSpec) -> GridFunction2D:
    """|T_0(f1, Delta_kappa f2)| with the unit torus read as [0, 8) x [0, 16).

    The unit shell t in [1/2, 2] becomes t/8 along x and t^2/16 along y, and Delta_kappa in y
    becomes the grid band kappa + 4.
    """
    n = _same_grid(f1, f2)
    x_period, y_period = DOMINATION_PERIODS
    band = kappa + int(math.log2(y_period))
    _, hi = band_range(n)
    if band > hi:
        raise BandError(
            f"Delta_{kappa} needs grid band {band} but n={n} resolves up to {hi}; use n >= {domination_grid(kappa, n)}"
        )
    banded = project(f2.values, 2, band)
    nodes = shell_nodes(quad, 0, 0)
    odd, _ = _odd_even_sums(
        f1.values,
        banded,
        nodes.t / x_period,
        nodes.scale_weights(0),
        None,
        curvature=x_period**2 / y_period,
    )
    return GridFunction2D(n, np.abs(odd))


def domination_constant(f1: GridFunction2D, f2: GridFunction2D, kappa: int, N: int, quad: QuadratureSpec) -> float:
    """max |T_0(f1, Delta_kappa f2)| / domination_rhs over the grid."""
    lhs = domination_lhs(f1, f2, kappa, quad).values
    rhs = domination_rhs(f1, f2, kappa, N).values
    positive = rhs > 0
    if np.any(lhs[~positive] > 1e-12):
        return math.inf
    return float(np.max(lhs[positive] / rhs[positive])) if np.any(positive) else 0.0


@dataclass(frozen=True)
class DominationEstimate:
    kappa: int
    n: int
    ratios: list[float]

    @property
    def ratio_max(self) -> float:
        return float(np.max(self.ratios))

    @property
    def ratio_median(self) -> float:
        return float(np.median(self.ratios))


def _domination_trial(kappa: int, n: int, seed: int, N: int, quad: QuadratureSpec, trial: int) -> float:
    f1 = lowpass_field(n, stream(seed, "f1", trial))
    f2 = gaussian_spectrum(n, stream(seed, "f2", trial), box_mask(n, n / 4, n / 2 - 1))
    return domination_constant(f1, f2, kappa, N, quad)


def domination_sweep(
    kappas: list[int],
    trials: int,
    seed: int,
    n: int,
    quad: QuadratureSpec | None = None,
    N: int = DOMINATION_N,
    max_workers: int = 1,
) -> list[DominationEstimate]:
    """Ratios lhs / rhs over random pairs for each kappa, each on the smallest grid that resolves its band."""
    if trials < 1:
        raise LabError(f"trials must be positive, got {trials}")
    if not kappas:
        raise LabError("domination sweep needs at least one kappa")
    quad = QuadratureSpec() if quad is None else quad
    estimates = []
    for kappa in kappas:
        grid = domination_grid(kappa, n)
        run = partial(_domination_trial, kappa, grid, seed, N, quad)
        ratios = ordered_map(run, range(trials), max_workers)
        logger.info("domination kappa=%d n=%d trials=%d max=%.4g", kappa, grid, trials, max(ratios))
        estimates.append(DominationEstimate(kappa=kappa, n=grid, ratios=list(ratios)))
    return estimates


SymbolFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class SymbolSpec:
    """Bilinear symbol m(xi, eta) with anisotropic exponents alpha, beta."""

    alpha: int
    beta: int
    evaluate: SymbolFn
    name: str = "symbol"
    derivative_budget: int = 2
    params: dict[str, float] = field(default_factory=dict)

    def __call__(self, xi: np.ndarray, eta: np.ndarray) -> np.ndarray:
        values = np.asarray(self.evaluate(np.asarray(xi, dtype=float), np.asarray(eta, dtype=float)))
        if not np.all(np.isfinite(values)):
            raise SymbolError(f"symbol {self.name} returned non-finite values")
        return values


def unit_symbol() -> SymbolSpec:
    return SymbolSpec(alpha=1, beta=1, evaluate=lambda xi, eta: np.ones(np.broadcast(xi, eta).shape), name="unit")


def separable_symbol(j: int, i: int) -> SymbolSpec:
    """psi_j(xi) phi_i(eta)."""
    psi_j = dyadic("annulus_psi", j)
    phi_i = dyadic("plateau_phi", i)
    return SymbolSpec(
        alpha=1,
        beta=1,
        evaluate=lambda xi, eta: psi_j(xi) * phi_i(eta),
        name="separable",
        params={"j": float(j), "i": float(i)},
    )


def _cone_piece(
    lead: np.ndarray,
    other: np.ndarray,
    lead_exp: int,
    other_exp: int,
    quad: QuadratureSpec,
) -> np.ndarray:
    """int_0^inf (psi h^2)(t^a lead) P_b(t^b other) dt/t, zero where lead vanishes."""
    profile, _ = cone_profile(other_exp, quad)
    log_u, weights = log_panels(math.log(0.5), math.log(2.0), quad.nodes_per_shell)
    u = np.exp(log_u)
    density = window("annulus_psi")(u) * window("gauss_h")(u) ** 2 * weights / lead_exp
    lead, other = np.broadcast_arrays(np.asarray(lead, dtype=float), np.asarray(other, dtype=float))
    out = np.zeros(lead.shape, dtype=float)
    nonzero = lead != 0
    a = np.abs(lead[nonzero]).reshape(-1, 1)
    b = other[nonzero].reshape(-1, 1)
    # t^a |lead| = u  =>  t^b other = (u / |lead|)^(b/a) other
    scaled = (u[None, :] / a) ** (other_exp / lead_exp) * b
    out[nonzero] = (profile(scaled) * density[None, :]).sum(axis=1)
    return out


ConePiece = Literal["first", "second", "full"]


def cone_symbol(
    alpha: int,
    beta: int,
    piece: ConePiece = "first",
    quad: QuadratureSpec | None = None,
) -> SymbolSpec:
    """Cone pieces m1 (xi dominant) and m2 (eta dominant); m1 + m2 = C_alpha C_beta off the origin."""
    quad = QuadratureSpec() if quad is None else quad

    def evaluate(xi: np.ndarray, eta: np.ndarray) -> np.ndarray:
        if piece == "first":
            return _cone_piece(xi, eta, alpha, beta, quad)
        if piece == "second":
            return _cone_piece(eta, xi, beta, alpha, quad)
        return _cone_piece(xi, eta, alpha, beta, quad) + _cone_piece(eta, xi, beta, alpha, quad)

    if piece not in ("first", "second", "full"):
        raise SymbolError(f"unknown cone piece: {piece!r}")
    return SymbolSpec(
        alpha=alpha,
        beta=beta,
        evaluate=evaluate,
        name=f"cone_{piece}",
        params={"nodes_per_shell": float(quad.nodes_per_shell)},
    )


def symbol_matrix(m: SymbolSpec, n: int) -> np.ndarray:
    """m(-xi, -eta) on FFT-ordered integer frequencies; ``out[a, b]`` pairs frequencies[a], frequencies[b]."""
    k = frequencies(n)
    xi, eta = np.meshgrid(-k, -k, indexing="ij")
    return m(xi, eta)


def aniso_apply(m: SymbolSpec, f1: GridFunction2D, f2: GridFunction2D) -> GridFunction2D:
    """sum_{xi, eta} m(-xi, -eta) a(xi, y) e(xi x) b(x, eta) e(eta y).

    ``a`` is the axis-1 spectrum of f1 and ``b`` the axis-2 spectrum of f2. For each eta the xi-sum
    is one inverse FFT along x, so the cost is O(n^3 log n).
    """
    n = _same_grid(f1, f2)
    symbol = symbol_matrix(m, n)
    a = np.fft.fft(f1.values, axis=0) / n
    b = np.fft.fft(f2.values, axis=1) / n
    phase = np.exp(2j * np.pi * np.outer(frequencies(n), np.arange(n) / n))
    out = np.zeros((n, n), dtype=np.complex128)
    step = max(1, _STACK_BUDGET // (n * n))
    for start in range(0, n, step):
        cols = slice(start, start + step)
        weighted = symbol[:, cols, None] * a[:, None, :]
        inner = np.fft.ifft(weighted, axis=0) * n
        out += np.einsum("xe,xey,ey->xy", b[:, cols], inner, phase[cols, :])
    return GridFunction2D(n, out)


def symbol_estimate(
    m: SymbolSpec,
    samples: list[tuple[float, float]],
    rel_step: float = 1e-3,
) -> dict[str, float]:
    """Largest |d_xi^k d_eta^l m| * rho^(alpha k + beta l) over ``samples``, rho = |xi|^(1/alpha) + |eta|^(1/beta)."""
    orders = [(k, l) for k in range(m.derivative_budget + 1) for l in range(m.derivative_budget + 1 - k)]
    ratios = {f"{k},{l}": 0.0 for k, l in orders}
    stencils = {0: ([0], [1.0]), 1: ([-1, 1], [-0.5, 0.5]), 2: ([-1, 0, 1], [1.0, -2.0, 1.0])}
    for xi, eta in samples:
        rho = abs(xi) ** (1.0 / m.alpha) + abs(eta) ** (1.0 / m.beta)
        if rho == 0:
            continue
        h_xi = rel_step * rho**m.alpha
        h_eta = rel_step * rho**m.beta
        for k, l in orders:
            offsets_x, coef_x = stencils[k]
            offsets_y, coef_y = stencils[l]
            pts_x = np.array([xi + ox * h_xi for ox in offsets_x for _ in offsets_y])
            pts_y = np.array([eta + oy * h_eta for _ in offsets_x for oy in offsets_y])
            coefs = np.array([cx * cy for cx in coef_x for cy in coef_y])
            derivative = abs(complex(np.sum(coefs * m(pts_x, pts_y)))) / (h_xi**k * h_eta**l)
            key = f"{k},{l}"
            ratios[key] = max(ratios[key], derivative * rho ** (m.alpha * k + m.beta * l))
    return ratios


def _curved_sums(
    g1: np.ndarray,
    g2: np.ndarray,
    t: np.ndarray,
    weights: np.ndarray,
) -> np.ndarray:
    """sum_k w_k [g1(x+t) - g1(x-t)] g2(x+t^2) for 1D arrays."""
    total = np.zeros(g1.shape, dtype=np.complex128)
    step = _chunk_size(g1.shape[0], 1)
    for start in range(0, t.size, step):
        block = t[start : start + step]
        second = shift_stack(g2, block**2, axis=0)
        difference = shift_stack(g1, block, axis=0) - shift_stack(g1, -block, axis=0)
        total += np.tensordot(weights[start : start + step], difference * second, axes=(0, 0))
    return total


def bht_curvature(g1: GridFunction1D, g2: GridFunction1D, quad: QuadratureSpec) -> GridFunction1D:
    """p.v. int g1(x+t) g2(x+t^2) dt/t by symmetric dyadic shells."""
    n = _same_grid(g1, g2)
    _check_shell(quad.j_min)
    nodes = shell_nodes(quad)
    return GridFunction1D(n, _curved_sums(g1.values, g2.values, nodes.t, nodes.merged))


def diagonal_embedding(g1: GridFunction1D, g2: GridFunction1D) -> tuple[GridFunction2D, GridFunction2D]:
    """Lift to f_i(x, y) = g_i(x + y); the 2D transform of the lift is bht_curvature along x + y."""
    n = _same_grid(g1, g2)
    index = (np.arange(n)[:, None] + np.arange(n)[None, :]) % n
    return GridFunction2D(n, g1.values[index]), GridFunction2D(n, g2.values[index])


def sw_maximal(g: GridFunction1D, n_set: list[float], quad: QuadratureSpec) -> GridFunction1D:
    """sup_N |p.v. int g(x-t) exp(i N t^2) dt/t| over ``n_set``."""
    if not n_set:
        raise LabError("Stein-Wainger maximal function needs a nonempty frequency set")
    _check_shell(quad.j_min)
    nodes = shell_nodes(quad)
    t = nodes.t
    best = np.zeros(g.n, dtype=float)
    step = _chunk_size(g.n, 1)
    # differences g(x-t) - g(x+t), reused for every N
    differences = []
    for start in range(0, t.size, step):
        block = t[start : start + step]
        differences.append(shift_stack(g.values, -block, axis=0) - shift_stack(g.values, block, axis=0))
    for frequency in n_set:
        total = np.zeros(g.n, dtype=np.complex128)
        for index, start in enumerate(range(0, t.size, step)):
            block = t[start : start + step]
            w = nodes.merged[start : start + step] * np.exp(1j * frequency * block**2)
            total += np.tensordot(w, differences[index], axes=(0, 0))
        best = np.maximum(best, np.abs(total))
    return GridFunction1D(g.n, best)


@dataclass(frozen=True)
class NormEstimate:
    operator: str
    n: int
    ratios: list[float]
    input_norms: list[tuple[float, float]]

    @property
    def ratio_max(self) -> float:
        return float(np.max(self.ratios))

    @property
    def ratio_median(self) -> float:
        return float(np.median(self.ratios))


def _operator_output(operator: str, n: int, seed: int, trial: int, quad: QuadratureSpec) -> tuple[float, float, float]:
    if operator in ("bht_curvature", "sw_maximal"):
        g1 = lowpass_field_1d(n, stream(seed, "f1", trial))
        g2 = lowpass_field_1d(n, stream(seed, "f2", trial))
        if operator == "bht_curvature":
            out = norm_lp_1d(bht_curvature(g1, g2, quad), 1)
            return out, norm_lp_1d(g1, 2), norm_lp_1d(g2, 2)
        out = norm_lp_1d(sw_maximal(g1, SW_FREQUENCIES, quad), 2)
        return out, norm_lp_1d(g1, 2), 1.0
    f1 = lowpass_field(n, stream(seed, "f1", trial))
    f2 = lowpass_field(n, stream(seed, "f2", trial))
    if operator == "truncated_t":
        image = truncated_t(f1, f2, quad)
    elif operator == "maximal":
        image = maximal(f1, f2, quad)
    elif operator == "cone_paraproduct":
        image = aniso_apply(cone_symbol(1, 2, "first", quad), f1, f2)
    else:
        raise LabError(f"unknown operator: {operator!r}")
    return norm_lp(image, 1), norm_lp(f1, 2), norm_lp(f2, 2)


def norm_estimate(
    operator: OperatorName,
    n: int,
    trials: int,
    seed: int,
    quad: QuadratureSpec | None = None,
    max_workers: int = 1,
) -> NormEstimate:
    """Empirical ratios ||Op(f1, f2)||_1 / (||f1||_2 ||f2||_2) over random low-pass inputs.

    sw_maximal is linear; its ratio is ||Op g||_2 / ||g||_2.
    """
    n = check_grid_size(n)
    if trials < 1:
        raise LabError(f"trials must be positive, got {trials}")
    quad = QuadratureSpec.for_grid(n) if quad is None else quad
    outputs = ordered_map(lambda trial: _operator_output(operator, n, seed, trial, quad), range(trials), max_workers)
    ratios = [out / (a * b) if a * b > 0 else 0.0 for out, a, b in outputs]
    logger.info("norm estimate %s n=%d trials=%d max=%.4g", operator, n, trials, max(ratios))
    return NormEstimate(operator=operator, n=n, ratios=ratios, input_norms=[(a, b) for _, a, b in outputs])
