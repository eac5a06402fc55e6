"""Dyadic rectangles, convex trees and the four-function forms built on them.

Rectangles have shape 2^{alpha k} x 2^{beta k}. A form over a collection integrates a kernel
density over the slabs Q x [l(Q)/2, l(Q)], so the union of slabs is never stored. Each density
is a sum over (x, x', y, y'); it is evaluated by first contracting the y and y' sums into two
n x n matrices per q node, then pairing them with the x-side matrix.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Iterable
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy.interpolate import CubicSpline

from harmonic.errors import FormError, GridSizeError, LevelError, SelectionError, TreeError
from harmonic.quadrature import QuadratureSpec
from harmonic.singular_ops import aniso_apply, cone_symbol
from harmonic.torus_grid import GridFunction2D, check_grid_size, frequencies
from harmonic.windows import cone_profile, gauss_legendre, window, window_fourier
from models.form import FormKind, FormReport
from models.tree import RectanglePayload, TreePayload

logger = logging.getLogger(__name__)

FORM_KINDS: tuple[str, ...] = ("lambda_uv", "theta1", "theta2", "xi", "bark")

# Gaussian kernels are summed over images within this many units of the profile variable
_GAUSS_REACH = 6.0
# periodic images of the polynomially decaying theta kernel
_THETA_IMAGES = 64
# tabulated range of the frequency-localized kernels
_KERNEL_TABLE_HALF_WIDTH = 32.0
_KERNEL_TABLE_NODES = 8193


@dataclass(frozen=True, order=True)
class DyadicRectangle:
    """Q = I x J with I = 2^{alpha k}[i1, i1 + 1) and J = 2^{beta k}[i2, i2 + 1)."""

    k: int
    i1: int
    i2: int
    alpha: int = 1
    beta: int = 2

    def __post_init__(self) -> None:
        if self.alpha < 1 or self.beta < 1:
            raise TreeError(f"anisotropy exponents must be positive, got ({self.alpha}, {self.beta})")

    @property
    def side(self) -> float:
        return 2.0**self.k

    @property
    def x_interval(self) -> tuple[float, float]:
        width = 2.0 ** (self.alpha * self.k)
        return self.i1 * width, (self.i1 + 1) * width

    @property
    def y_interval(self) -> tuple[float, float]:
        height = 2.0 ** (self.beta * self.k)
        return self.i2 * height, (self.i2 + 1) * height

    @property
    def area(self) -> float:
        return 2.0 ** ((self.alpha + self.beta) * self.k)

    @property
    def center(self) -> tuple[float, float]:
        (x0, x1), (y0, y1) = self.x_interval, self.y_interval
        return 0.5 * (x0 + x1), 0.5 * (y0 + y1)

    def children(self) -> list[DyadicRectangle]:
        nx, ny = 2**self.alpha, 2**self.beta
        return [
            DyadicRectangle(self.k - 1, self.i1 * nx + a, self.i2 * ny + b, self.alpha, self.beta)
            for a in range(nx)
            for b in range(ny)
        ]

    def parent(self) -> DyadicRectangle:
        return DyadicRectangle(self.k + 1, self.i1 >> self.alpha, self.i2 >> self.beta, self.alpha, self.beta)

    def contains(self, other: DyadicRectangle) -> bool:
        if (other.alpha, other.beta) != (self.alpha, self.beta) or other.k > self.k:
            return False
        gap = self.k - other.k
        return (other.i1 >> (self.alpha * gap)) == self.i1 and (other.i2 >> (self.beta * gap)) == self.i2

    def to_payload(self) -> RectanglePayload:
        return RectanglePayload(k=self.k, i1=self.i1, i2=self.i2)


def unit_rectangles(k_min: int, k_max: int = 0, alpha: int = 1, beta: int = 2) -> list[DyadicRectangle]:
    """Every rectangle of scale k_min..k_max inside the unit square."""
    if k_max > 0 or k_min > k_max:
        raise TreeError(f"scale range [{k_min}, {k_max}] does not fit in the unit square")
    rects = []
    for k in range(k_max, k_min - 1, -1):
        nx, ny = 2 ** (-alpha * k), 2 ** (-beta * k)
        rects.extend(DyadicRectangle(k, a, b, alpha, beta) for a in range(nx) for b in range(ny))
    return rects


def _geometry(rects: Iterable[DyadicRectangle]) -> tuple[int, int]:
    shapes = {(q.alpha, q.beta) for q in rects}
    if len(shapes) != 1:
        raise TreeError(f"rectangles must share one anisotropy, got {sorted(shapes)}")
    return shapes.pop()


@dataclass(frozen=True)
class Tree:
    """Convex tree: every member sits inside ``root`` and every ancestor up to the root is a member."""

    rects: frozenset[DyadicRectangle]
    root: DyadicRectangle

    def __post_init__(self) -> None:
        object.__setattr__(self, "rects", frozenset(self.rects))
        if self.root not in self.rects:
            raise TreeError("tree root must be a member of the tree")
        _geometry(self.rects)
        for q in self.rects:
            if not self.root.contains(q):
                raise TreeError(f"rectangle {q} lies outside the root {self.root}")
            ancestor = q
            while ancestor.k < self.root.k:
                ancestor = ancestor.parent()
                if ancestor not in self.rects:
                    raise TreeError(f"tree is not convex: {ancestor} is missing between {q} and the root")

    @classmethod
    def from_rectangles(cls, rects: Iterable[DyadicRectangle]) -> Tree:
        members = frozenset(rects)
        if not members:
            raise TreeError("a tree needs at least one rectangle")
        top = max(q.k for q in members)
        roots = [q for q in members if q.k == top]
        if len(roots) != 1:
            raise TreeError(f"no single root: {len(roots)} rectangles at the top scale {top}")
        return cls(rects=members, root=roots[0])

    @property
    def alpha(self) -> int:
        return self.root.alpha

    @property
    def beta(self) -> int:
        return self.root.beta

    def sorted_rects(self) -> list[DyadicRectangle]:
        return sorted(self.rects, key=lambda q: (-q.k, q.i1, q.i2))

    def to_payload(self) -> TreePayload:
        return TreePayload(
            alpha=self.alpha,
            beta=self.beta,
            root=self.root.to_payload(),
            rects=[q.to_payload() for q in self.sorted_rects()],
        )

    @classmethod
    def from_payload(cls, payload: TreePayload | dict) -> Tree:
        data = payload if isinstance(payload, TreePayload) else TreePayload.model_validate(payload)
        rects = [DyadicRectangle(r.k, r.i1, r.i2, data.alpha, data.beta) for r in data.rects]
        if data.root is None:
            return cls.from_rectangles(rects)
        root = DyadicRectangle(data.root.k, data.root.i1, data.root.i2, data.alpha, data.beta)
        return cls(rects=frozenset(rects), root=root)


def tree_leaves(t: Tree) -> set[DyadicRectangle]:
    """Children of members that are not members themselves; they tile the root."""
    if not isinstance(t, Tree):
        t = Tree.from_rectangles(t)
    return {child for q in t.rects for child in q.children() if child not in t.rects}


def random_convex_tree(
    root: DyadicRectangle,
    depth: int,
    rng: np.random.Generator,
    branch_probability: float = 0.5,
) -> Tree:
    members = {root}
    frontier = [root]
    for _ in range(depth):
        grown = []
        for q in frontier:
            for child in q.children():
                if rng.random() < branch_probability:
                    members.add(child)
                    grown.append(child)
        frontier = grown
    return Tree(rects=frozenset(members), root=root)


@dataclass(frozen=True)
class ConeModulation:
    u: float = 0.0
    v: float = 0.0

    @property
    def c_bound(self) -> float:
        return (1.0 + abs(self.u) + abs(self.v)) ** 100


# --- kernels ----------------------------------------------------------------------------------


def _periodized_rows(
    profile: Callable[[np.ndarray], np.ndarray],
    centers: np.ndarray,
    width: float,
    n: int,
    images: int,
    shift: float = 0.0,
) -> np.ndarray:
    """rows[p, x] = width^{-1} sum_m profile((x/n - centers[p] + m) / width - shift)."""
    x = np.arange(n) / n
    m = np.arange(-images, images + 1)
    u = (x[None, :, None] - np.asarray(centers, dtype=float)[:, None, None] + m[None, None, :]) / width - shift
    return profile(u).sum(axis=2) / width


def _gauss_images(width: float, shift: float = 0.0) -> int:
    return math.ceil((_GAUSS_REACH + abs(shift)) * width) + 1


def _gauss_rows(centers: np.ndarray, width: float, n: int) -> np.ndarray:
    return _periodized_rows(window("gauss_g"), centers, width, n, _gauss_images(width))


def _gauss_h_rows(centers: np.ndarray, width: float, n: int) -> np.ndarray:
    return _periodized_rows(window("gauss_h"), centers, width, n, _gauss_images(width))


def _theta_rows(centers: np.ndarray, width: float, n: int) -> np.ndarray:
    return _periodized_rows(window("decay_theta"), centers, width, n, _THETA_IMAGES)


@lru_cache(maxsize=None)
def _kernel_table(name: str) -> CubicSpline:
    z = np.linspace(-_KERNEL_TABLE_HALF_WIDTH, _KERNEL_TABLE_HALF_WIDTH, _KERNEL_TABLE_NODES)
    if name == "phi_check":
        values = window_fourier(window("plateau_phi"), z).real
    else:
        # (h * psi-check)(y) = -4 pi int_{1/2}^{2} eta exp(-pi eta^2) psi(eta) sin(2 pi y eta) d eta
        panels = 8 + math.ceil(3.0 * _KERNEL_TABLE_HALF_WIDTH)
        edges = np.linspace(0.5, 2.0, panels + 1)
        x, weights = gauss_legendre(16)
        half = 0.5 * (edges[1] - edges[0])
        eta = (0.5 * (edges[:-1] + edges[1:])[:, None] + half * x[None, :]).reshape(-1)
        density = np.tile(half * weights, panels) * eta * np.exp(-np.pi * eta**2) * window("annulus_psi")(eta)
        values = -4.0 * np.pi * (np.sin(2.0 * np.pi * np.outer(z, eta)) @ density)
    return CubicSpline(z, values)


def _tabulated(name: str) -> Callable[[np.ndarray], np.ndarray]:
    spline = _kernel_table(name)

    def profile(u: np.ndarray) -> np.ndarray:
        inside = np.abs(u) <= _KERNEL_TABLE_HALF_WIDTH
        return np.where(inside, spline(np.clip(u, -_KERNEL_TABLE_HALF_WIDTH, _KERNEL_TABLE_HALF_WIDTH)), 0.0)

    return profile


def _table_rows(name: str, centers: np.ndarray, width: float, n: int, shift: float) -> np.ndarray:
    images = math.ceil((_KERNEL_TABLE_HALF_WIDTH + abs(shift)) * width) + 1
    return _periodized_rows(_tabulated(name), centers, width, n, images, shift)


# --- factorized density ------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FormInputs:
    """The four functions of a form, paired as f1(x', y) f2(x, y') f3(x, y) f4(x', y')."""

    f1: np.ndarray
    f2: np.ndarray
    f3: np.ndarray
    f4: np.ndarray
    n: int

    @classmethod
    def of(cls, f1: GridFunction2D, f2: GridFunction2D, f3: GridFunction2D, f4: GridFunction2D) -> FormInputs:
        sizes = {f.n for f in (f1, f2, f3, f4)}
        if len(sizes) != 1:
            raise GridSizeError(f"form inputs live on different grids: {sorted(sizes)}")
        return cls(f1.values, f2.values, f3.values, f4.values, sizes.pop())

    @property
    def is_zero(self) -> bool:
        return not any(np.any(f) for f in (self.f1, self.f2, self.f3, self.f4))


def _side_matrix(a: np.ndarray, a2: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """sum_p w_p a[p, x] a2[p, x']."""
    return (a * weights[:, None]).T @ a2


def _pair_matrix(fs: FormInputs, b: np.ndarray, b2: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """sum_q w_q (sum_y f1(x', y) f3(x, y) b[q, y]) (sum_y' f2(x, y') f4(x', y') b2[q, y']), indexed [x, x']."""
    u = (fs.f1[None, :, :] * b[:, None, :]) @ fs.f3.T
    v = (fs.f2[None, :, :] * b2[:, None, :]) @ fs.f4.T
    return np.einsum("q,qzx,qxz->xz", weights, u, v)


def _contract(side: np.ndarray, pair: np.ndarray, n: int) -> complex:
    return complex(np.sum(side * pair)) / n**4


def form_density(fs: FormInputs, a: np.ndarray, a2: np.ndarray, b: np.ndarray, b2: np.ndarray) -> complex:
    """Density at one node: n^-4 sum f1(x',y) f2(x,y') f3(x,y) f4(x',y') a(x) a2(x') b(y) b2(y')."""
    one = np.ones(1)
    return _contract(_side_matrix(a[None, :], a2[None, :], one), _pair_matrix(fs, b[None, :], b2[None, :], one), fs.n)


def direct_form_density(fs: FormInputs, a: np.ndarray, a2: np.ndarray, b: np.ndarray, b2: np.ndarray) -> complex:
    """O(n^4) evaluation of :func:`form_density`."""
    total = np.einsum("zy,xw,xy,zw,x,z,y,w->", fs.f1, fs.f2, fs.f3, fs.f4, a, a2, b, b2)
    return complex(total) / fs.n**4


# --- forms over collections ----------------------------------------------------------------------


@dataclass(frozen=True)
class FormQuadrature:
    """Gauss-Legendre rule per rectangle side and per t slab [l/2, l]."""

    space_nodes: int = 16
    t_nodes: int = 32

    def __post_init__(self) -> None:
        if self.space_nodes < 2 or self.t_nodes < 2:
            raise FormError(f"form quadrature needs at least 2 nodes per direction, got {self}")

    def refined(self, factor: int) -> FormQuadrature:
        return replace(self, space_nodes=self.space_nodes * int(factor), t_nodes=self.t_nodes * int(factor))

    def to_dict(self) -> dict[str, int]:
        return {"space_nodes": self.space_nodes, "t_nodes": self.t_nodes}


@dataclass(frozen=True)
class FormParams:
    u: float = 0.0
    v: float = 0.0
    lam: float = 1.0
    r: float = 0.0

    def __post_init__(self) -> None:
        if not self.lam >= 1.0:
            raise FormError(f"lambda must be at least 1, got {self.lam}")
        if not all(math.isfinite(value) for value in (self.u, self.v, self.lam, self.r)):
            raise FormError("form parameters must be finite")

    @classmethod
    def of(cls, params: FormParams | dict | None) -> FormParams:
        if params is None:
            return cls()
        if isinstance(params, FormParams):
            return params
        unknown = sorted(set(params) - {"u", "v", "lam", "lambda", "r"})
        if unknown:
            raise FormError(f"unknown form parameters: {unknown}")
        data = dict(params)
        if "lambda" in data:
            data["lam"] = data.pop("lambda")
        return cls(**{key: float(value) for key, value in data.items()})

    def to_dict(self) -> dict[str, float]:
        return {"u": self.u, "v": self.v, "lambda": self.lam, "r": self.r}


def _nodes(lower: float, upper: float, count: int) -> tuple[np.ndarray, np.ndarray]:
    x, weights = gauss_legendre(count)
    half = 0.5 * (upper - lower)
    return 0.5 * (lower + upper) + half * x, half * weights


@dataclass
class RectangleTerms:
    """Per-rectangle pieces of the telescoping identity."""

    rect: DyadicRectangle
    theta1: complex = 0j
    theta2: complex = 0j
    bark: complex = 0j
    xi: complex = 0j


def _xi(fs: FormInputs, q: DyadicRectangle, params: FormParams, quad: FormQuadrature) -> complex:
    """pi times the all-Gaussian density at t = l(Q), integrated over Q."""
    p_nodes, p_weights = _nodes(*q.x_interval, quad.space_nodes)
    q_nodes, q_weights = _nodes(*q.y_interval, quad.space_nodes)
    s = params.lam * q.side**q.alpha
    sigma = q.side**q.beta
    g_p = _gauss_rows(p_nodes, s, fs.n)
    g_q = _gauss_rows(q_nodes + params.r * sigma, sigma, fs.n)
    return math.pi * _contract(_side_matrix(g_p, g_p, p_weights), _pair_matrix(fs, g_q, g_q, q_weights), fs.n)


def _slab_terms(fs: FormInputs, q: DyadicRectangle, params: FormParams, quad: FormQuadrature) -> RectangleTerms:
    """Theta1, Theta2 and the boundary form over Q x [l/2, l], plus Xi at t = l."""
    alpha, beta, n = q.alpha, q.beta, fs.n
    (x0, x1), (y0, y1) = q.x_interval, q.y_interval
    p_nodes, p_weights = _nodes(x0, x1, quad.space_nodes)
    q_nodes, q_weights = _nodes(y0, y1, quad.space_nodes)
    t_nodes, t_weights = _nodes(0.5 * q.side, q.side, quad.t_nodes)
    p_ends = np.array([x1, x0])
    q_ends = np.array([y1, y0])
    signs = np.array([1.0, -1.0])
    terms = RectangleTerms(rect=q)
    for t, wt in zip(t_nodes, t_weights / t_nodes):
        s = params.lam * t**alpha
        sigma = t**beta
        shift = params.r * sigma
        g_p, h_p = _gauss_rows(p_nodes, s, n), _gauss_h_rows(p_nodes, s, n)
        g_q, h_q = _gauss_rows(q_nodes + shift, sigma, n), _gauss_h_rows(q_nodes + shift, sigma, n)
        side_gg = _side_matrix(g_p, g_p, p_weights)
        pair_gg = _pair_matrix(fs, g_q, g_q, q_weights)
        terms.theta1 += wt * _contract(_side_matrix(h_p, h_p, p_weights), pair_gg, n)
        terms.theta2 += wt * _contract(side_gg, _pair_matrix(fs, h_q, h_q, q_weights), n)

        g_pe, h_pe = _gauss_rows(p_ends, s, n), _gauss_h_rows(p_ends, s, n)
        g_qe, h_qe = _gauss_rows(q_ends + shift, sigma, n), _gauss_h_rows(q_ends + shift, sigma, n)
        side_edge = _side_matrix(h_pe, g_pe, signs) + _side_matrix(g_pe, h_pe, signs)
        pair_edge = _pair_matrix(fs, h_qe, g_qe, signs) + _pair_matrix(fs, g_qe, h_qe, signs)
        pair_shift = _pair_matrix(fs, g_qe, g_qe, signs)
        term_p = 0.5 * alpha * s * _contract(side_edge, pair_gg, n)
        term_q = 0.5 * beta * sigma * _contract(side_gg, pair_edge, n)
        term_r = math.pi * beta * params.r * sigma * _contract(side_gg, pair_shift, n)
        terms.bark += wt * (term_r - term_p - term_q)
    terms.xi = _xi(fs, q, params, quad)
    return terms


def _lambda_slab(
    fs: FormInputs,
    q: DyadicRectangle,
    params: FormParams,
    quad: FormQuadrature,
    c: Callable[[float], float],
) -> complex:
    n = fs.n
    p_nodes, p_weights = _nodes(*q.x_interval, quad.space_nodes)
    q_nodes, q_weights = _nodes(*q.y_interval, quad.space_nodes)
    t_nodes, t_weights = _nodes(0.5 * q.side, q.side, quad.t_nodes)
    total = 0j
    for t, wt in zip(t_nodes, t_weights / t_nodes):
        wx, wy = t**q.alpha, t**q.beta
        a = _table_rows("phi_check", p_nodes, wx, n, params.u)
        b = _table_rows("h_psi_check", q_nodes, wy, n, params.v)
        side = _side_matrix(a, _gauss_rows(p_nodes, wx, n), p_weights)
        pair = _pair_matrix(fs, b, _gauss_h_rows(q_nodes, wy, n), q_weights)
        total += wt * c(float(t)) * _contract(side, pair, n)
    return total


def _rects_of(region: Tree | Iterable[DyadicRectangle]) -> list[DyadicRectangle]:
    rects = region.sorted_rects() if isinstance(region, Tree) else sorted(set(region), key=lambda q: (-q.k, q.i1, q.i2))
    if not rects:
        raise TreeError("form region is empty")
    _geometry(rects)
    return rects


def rectangle_terms(
    region: Tree | Iterable[DyadicRectangle],
    fs: FormInputs,
    params: FormParams | dict | None = None,
    quad: FormQuadrature | None = None,
) -> list[RectangleTerms]:
    params = FormParams.of(params)
    quad = FormQuadrature() if quad is None else quad
    return [_slab_terms(fs, q, params, quad) for q in _rects_of(region)]


def bark_terms(
    region: Tree | Iterable[DyadicRectangle],
    f1: GridFunction2D,
    f2: GridFunction2D,
    f3: GridFunction2D,
    f4: GridFunction2D,
    params: FormParams | dict | None = None,
    quad: FormQuadrature | None = None,
) -> dict[DyadicRectangle, complex]:
    terms = rectangle_terms(region, FormInputs.of(f1, f2, f3, f4), params, quad)
    return {term.rect: term.bark for term in terms}


def quad_form(
    kind: FormKind,
    region: Tree | Iterable[DyadicRectangle],
    f1: GridFunction2D,
    f2: GridFunction2D,
    f3: GridFunction2D,
    f4: GridFunction2D,
    params: FormParams | dict | None = None,
    quad: FormQuadrature | None = None,
    c: Callable[[float], float] | None = None,
) -> complex:
    if kind not in FORM_KINDS:
        raise FormError(f"unknown form kind: {kind!r}")
    params = FormParams.of(params)
    quad = FormQuadrature() if quad is None else quad
    fs = FormInputs.of(f1, f2, f3, f4)
    rects = _rects_of(region)
    if kind == "lambda_uv":
        profile = c or (lambda t: 1.0)
        return sum((_lambda_slab(fs, q, params, quad, profile) for q in rects), 0j)
    if kind == "xi":
        return sum((_xi(fs, q, params, quad) for q in rects), 0j)
    terms = [_slab_terms(fs, q, params, quad) for q in rects]
    return sum((getattr(term, kind) for term in terms), 0j)


def form_report(
    kind: FormKind,
    value: complex,
    params: FormParams | dict | None = None,
    quad: FormQuadrature | None = None,
) -> FormReport:
    params = FormParams.of(params)
    quad = FormQuadrature() if quad is None else quad
    return FormReport(
        kind=kind,
        params=params.to_dict(),
        value_re=float(value.real),
        value_im=float(value.imag),
        quad=quad.to_dict(),
    )


@dataclass(frozen=True)
class TelescopingResult:
    residual: float
    scale: float
    terms: dict[str, complex] = field(default_factory=dict)

    @property
    def relative(self) -> float:
        return self.residual / self.scale if self.scale > 0 else 0.0


def telescoping_residual(
    t: Tree,
    f1: GridFunction2D,
    f2: GridFunction2D,
    f3: GridFunction2D,
    f4: GridFunction2D,
    lam: float = 1.0,
    r: float = 0.0,
    quad: FormQuadrature | None = None,
) -> TelescopingResult:
    """Residual of alpha Theta1 + beta Theta2 = Xi(leaves) - Xi(root) + B over the tree.

    ``scale`` is the largest magnitude among the signed terms.
    """
    if not isinstance(t, Tree):
        raise TreeError("telescoping needs a convex tree")
    params = FormParams(lam=lam, r=r)
    quad = FormQuadrature() if quad is None else quad
    fs = FormInputs.of(f1, f2, f3, f4)
    if fs.is_zero:
        return TelescopingResult(0.0, 0.0, {"theta1": 0j, "theta2": 0j, "xi_root": 0j, "xi_leaves": 0j, "bark": 0j})
    per_rect = rectangle_terms(t, fs, params, quad)
    theta1 = sum((term.theta1 for term in per_rect), 0j)
    theta2 = sum((term.theta2 for term in per_rect), 0j)
    bark = sum((term.bark for term in per_rect), 0j)
    xi_root = next(term.xi for term in per_rect if term.rect == t.root)
    xi_leaves = sum((_xi(fs, leaf, params, quad) for leaf in sorted(tree_leaves(t))), 0j)
    lhs = t.alpha * theta1 + t.beta * theta2
    rhs = xi_leaves - xi_root + bark
    terms = {"theta1": theta1, "theta2": theta2, "xi_root": xi_root, "xi_leaves": xi_leaves, "bark": bark}
    scale = max(abs(t.alpha * theta1), abs(t.beta * theta2), abs(xi_root), abs(xi_leaves), abs(bark))
    return TelescopingResult(residual=abs(lhs - rhs), scale=scale, terms=terms)


def telescoping_refinement(
    t: Tree,
    fs: tuple[GridFunction2D, GridFunction2D, GridFunction2D, GridFunction2D],
    lam: float = 1.0,
    r: float = 0.0,
    quad: FormQuadrature | None = None,
    factors: tuple[int, ...] = (1, 2),
) -> list[TelescopingResult]:
    quad = FormQuadrature() if quad is None else quad
    results = [telescoping_residual(t, *fs, lam=lam, r=r, quad=quad.refined(factor)) for factor in factors]
    for coarse, fine in zip(results, results[1:]):
        if fine.residual > coarse.residual + 1e-12 * max(coarse.scale, 1.0):
            logger.warning("telescoping residual grew under refinement: %.3e -> %.3e", coarse.residual, fine.residual)
    return results


# --- maximal function and selection --------------------------------------------------------------


def _theta_primitive(u: np.ndarray) -> np.ndarray:
    return np.sign(u) * (1.0 - (1.0 + np.abs(u)) ** -9) / 9.0


def _cell_weights(centers: np.ndarray, width: float, n: int) -> np.ndarray:
    """weights[r, i] = int over cell i (and its periodic images) of theta_width(center_r - x) dx."""
    edges = np.arange(n + 1) / n
    m = np.arange(-_THETA_IMAGES, _THETA_IMAGES + 1)
    d = np.asarray(centers, dtype=float)[:, None, None] - edges[None, :, None] - m[None, None, :]
    prim = _theta_primitive(d / width).sum(axis=2)
    return prim[:, :-1] - prim[:, 1:]


def local_averages(f: GridFunction2D, rects: Iterable[DyadicRectangle]) -> dict[DyadicRectangle, float]:
    """(|f|^2 * (theta_{l^alpha} x theta_{l^beta}))(c(Q))^{1/2} for each Q, integrating f cell by cell."""
    energy = np.abs(f.values) ** 2
    by_scale: dict[int, list[DyadicRectangle]] = {}
    for q in rects:
        by_scale.setdefault(q.k, []).append(q)
    out: dict[DyadicRectangle, float] = {}
    for k, group in sorted(by_scale.items()):
        alpha, beta = group[0].alpha, group[0].beta
        cx = np.array([q.center[0] for q in group])
        cy = np.array([q.center[1] for q in group])
        wx = _cell_weights(cx, 2.0 ** (alpha * k), f.n)
        wy = _cell_weights(cy, 2.0 ** (beta * k), f.n)
        values = np.einsum("ri,ij,rj->r", wx, energy, wy)
        out.update({q: float(np.sqrt(max(v, 0.0))) for q, v in zip(group, values)})
    return out


def local_max(f: GridFunction2D, q: Iterable[DyadicRectangle]) -> float:
    rects = list(q)
    if not rects:
        raise TreeError("local maximal function needs a nonempty collection")
    _geometry(rects)
    return max(local_averages(f, rects).values())


def _dyadic_exponent(value: float) -> int:
    """The integer m with 2^{m-1} < value <= 2^m."""
    mantissa, exponent = math.frexp(value)
    return exponent - 1 if mantissa == 0.5 else exponent


@dataclass(frozen=True)
class SelectedTree:
    levels: tuple[int, int, int]
    tree: Tree


def tree_select(
    q0: Iterable[DyadicRectangle],
    f1: GridFunction2D,
    f2: GridFunction2D,
    f3: GridFunction2D,
) -> list[SelectedTree]:
    """Sort q0 by the dyadic size of the sup of the local averages over ancestors, then split into trees."""
    rects = sorted(set(q0), key=lambda q: (-q.k, q.i1, q.i2))
    if not rects:
        raise TreeError("tree selection needs a nonempty collection")
    _geometry(rects)
    top = rects[0].k
    exponents: dict[DyadicRectangle, list[int]] = {q: [] for q in rects}
    for f in (f1, f2, f3):
        if not np.any(f.values):
            raise SelectionError("tree selection needs functions that do not vanish identically")
        averages = local_averages(f, rects)
        sup: dict[DyadicRectangle, float] = {}
        for q in rects:
            best = averages[q]
            ancestor = q
            while ancestor.k < top:
                ancestor = ancestor.parent()
                if ancestor in sup:
                    best = max(best, sup[ancestor])
                    break
            sup[q] = best
        for q in rects:
            exponents[q].append(_dyadic_exponent(sup[q]))

    classes: dict[tuple[int, int, int], list[DyadicRectangle]] = {}
    for q in rects:
        classes.setdefault(tuple(exponents[q]), []).append(q)
    forest = []
    for levels in sorted(classes):
        members = classes[levels]
        # members run coarse to fine; a missing parent starts a new tree
        root_of: dict[DyadicRectangle, DyadicRectangle] = {}
        groups: dict[DyadicRectangle, set[DyadicRectangle]] = {}
        for q in members:
            parent = q.parent() if q.k < top else None
            root = root_of[parent] if parent in root_of else q
            root_of[q] = root
            groups.setdefault(root, set()).add(q)
        for root in sorted(groups, key=lambda q: (-q.k, q.i1, q.i2)):
            forest.append(SelectedTree(levels=levels, tree=Tree(rects=frozenset(groups[root]), root=root)))
    logger.debug("tree_select: %d rectangles into %d trees over %d classes", len(rects), len(forest), len(classes))
    return forest


# --- fiber-wise Calderon-Zygmund -----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CZDecomposition:
    g: GridFunction2D
    b: GridFunction2D
    intervals: list[list[tuple[int, int]]]
    overflow_rows: list[int]
    diagnostics: dict[str, float]


def _stopping_intervals(row: np.ndarray, level: float, p: float) -> tuple[list[tuple[int, int]], bool]:
    """Maximal dyadic intervals (start cell, length) whose L^p average exceeds ``level``."""
    n = row.size
    power = np.abs(row) ** p

    def average(start: int, length: int) -> float:
        return float(power[start : start + length].mean()) ** (1.0 / p)

    if average(0, n) > level:
        return [(0, n)], True
    selected = []
    stack = [(0, n)]
    while stack:
        start, length = stack.pop()
        if length == 1:
            continue
        half = length // 2
        for child in ((start + half, half), (start, half)):
            if average(*child) > level:
                selected.append(child)
            else:
                stack.append(child)
    return sorted(selected), False


def fiber_cz(f: GridFunction2D, level: float, p: float = 1.0) -> CZDecomposition:
    """Stopping-time split of each fiber f(., y) into g + b.

    g is f off the selected intervals and the L^p average |I|^{-1/p} ||f||_{L^p(I)} on each of them. At p = 1
    the plain mean is used instead, which agrees for non-negative fibers and keeps b mean-zero on I.
    """
    if not level > 0:
        raise LevelError(f"level must be positive, got {level}")
    if p < 1:
        raise LevelError(f"exponent must be at least 1, got {p}")
    n = f.n
    g = np.array(f.values, copy=True)
    intervals: list[list[tuple[int, int]]] = []
    overflow: list[int] = []
    union = 0.0
    b_ratio = 0.0
    mean_residual = 0.0
    for y in range(n):
        row = f.values[:, y]
        selected, overflowed = _stopping_intervals(row, level, p)
        if overflowed:
            overflow.append(y)
        for start, length in selected:
            piece = slice(start, start + length)
            if p == 1:
                g[piece, y] = row[piece].mean()
            else:
                g[piece, y] = float(np.mean(np.abs(row[piece]) ** p)) ** (1.0 / p)
            size = length / n
            b_piece = row[piece] - g[piece, y]
            b_norm = float(np.mean(np.abs(b_piece) ** p) * size) ** (1.0 / p)
            b_ratio = max(b_ratio, b_norm / (level * size ** (1.0 / p)))
            if p == 1:
                mean_residual = max(mean_residual, float(abs(b_piece.mean())))
            union += size
        intervals.append(selected)
    b = f.values - g
    covered = np.zeros((n, n), dtype=bool)
    for y, selected in enumerate(intervals):
        for start, length in selected:
            covered[start : start + length, y] = True
    off = np.abs(f.values[~covered])
    norm_p = float(np.mean(np.abs(f.values) ** p))
    diagnostics = {
        "g_sup": float(np.max(np.abs(g))),
        "g_sup_bound": 2.0 ** (1.0 / p) * level,
        "off_interval_sup": float(off.max()) if off.size else 0.0,
        "b_ratio_max": b_ratio,
        "b_ratio_within_two": float(b_ratio <= 2.0),
        "union_measure": union / n,
        "union_bound": norm_p / level**p,
    }
    if p == 1:
        diagnostics["mean_residual_max"] = mean_residual
    if overflow:
        logger.warning("fiber_cz: %d rows exceed the level on the whole fiber", len(overflow))
    return CZDecomposition(GridFunction2D(n, g), GridFunction2D(n, b), intervals, overflow, diagnostics)


# --- diagnostics -------------------------------------------------------------------------------


def lemma_kernel_bound(
    f1: GridFunction2D,
    f2: GridFunction2D,
    f3: GridFunction2D,
    f4: GridFunction2D,
    p: float,
    q: float,
    t: float,
    alpha: int = 1,
    beta: int = 2,
) -> tuple[float, float]:
    """Four-function theta density at (p, q, t) and the product of the f_j^2 averages, square-rooted."""
    fs = FormInputs.of(f1, f2, f3, f4)
    n = fs.n
    a = _theta_rows(np.array([p]), t**alpha, n)[0]
    b = _theta_rows(np.array([q]), t**beta, n)[0]
    magnitudes = FormInputs(np.abs(fs.f1), np.abs(fs.f2), np.abs(fs.f3), np.abs(fs.f4), n)
    lhs = form_density(magnitudes, a, a, b, b).real
    rhs = 1.0
    for values in (fs.f1, fs.f2, fs.f3, fs.f4):
        rhs *= math.sqrt(float(a @ (np.abs(values) ** 2) @ b) / n**2)
    return float(lhs), rhs


def theta_domination(
    region: Tree | Iterable[DyadicRectangle],
    big_f: GridFunction2D,
    big_g: GridFunction2D,
    lam: float = 1.0,
    r: float = 0.0,
    quad: FormQuadrature | None = None,
) -> tuple[float, float]:
    """|Theta1(F, G, G, F)| against (Theta1(F, F, F, F) Theta1(G, G, G, G))^{1/2} for real F, G."""
    params = {"lam": lam, "r": r}
    mixed = quad_form("theta1", region, big_f, big_g, big_g, big_f, params, quad)
    pure_f = quad_form("theta1", region, big_f, big_f, big_f, big_f, params, quad)
    pure_g = quad_form("theta1", region, big_g, big_g, big_g, big_g, params, quad)
    return abs(mixed), math.sqrt(max(pure_f.real, 0.0) * max(pure_g.real, 0.0))


def tree_estimate_ratio(
    t: Tree,
    f1: GridFunction2D,
    f2: GridFunction2D,
    f3: GridFunction2D,
    f4: GridFunction2D,
    modulation: ConeModulation | None = None,
    quad: FormQuadrature | None = None,
) -> float:
    """|Lambda_T| / (C_{u,v} |Q_T| prod_j M_T(f_j))."""
    modulation = ConeModulation() if modulation is None else modulation
    value = quad_form("lambda_uv", t, f1, f2, f3, f4, {"u": modulation.u, "v": modulation.v}, quad)
    bound = modulation.c_bound * t.root.area
    for f in (f1, f2, f3, f4):
        bound *= local_max(f, t.rects)
    if bound == 0:
        return 0.0
    return abs(value) / bound


# --- model operator ----------------------------------------------------------------------------


def _cone_density(u: np.ndarray) -> np.ndarray:
    return window("annulus_psi")(u) * window("gauss_h")(u) ** 2


def model_operator(
    f1: GridFunction2D,
    f2: GridFunction2D,
    alpha: int = 1,
    beta: int = 2,
    quad: QuadratureSpec | None = None,
    c: Callable[[np.ndarray], np.ndarray] | None = None,
    modulation: ConeModulation | None = None,
    piece: str = "first",
) -> GridFunction2D:
    """int A_t f1 * B_t f2 c(t) dt/t with the cone multipliers applied at -xi and -eta.

    For the first piece A_t = (psi h^2)(t^alpha xi) and B_t = P_beta(t^beta eta); the second piece
    swaps the roles of the two axes. Modulation multiplies A_t by e(u t^alpha xi) and B_t by
    e(v t^beta eta).
    """
    if piece not in ("first", "second", "full"):
        raise FormError(f"unknown cone piece: {piece!r}")
    if piece == "full":
        first = model_operator(f1, f2, alpha, beta, quad, c, modulation, "first")
        second = model_operator(f1, f2, alpha, beta, quad, c, modulation, "second")
        return GridFunction2D(first.n, first.values + second.values)
    if f1.n != f2.n:
        raise GridSizeError(f"inputs live on different grids: {f1.n} and {f2.n}")
    quad = QuadratureSpec() if quad is None else quad
    modulation = ConeModulation() if modulation is None else modulation
    n = check_grid_size(f1.n)
    k = -frequencies(n)
    lead_exp = alpha if piece == "first" else beta
    profile, _ = cone_profile(beta if piece == "first" else alpha, quad)
    step = math.log(2.0) / (lead_exp * quad.nodes_per_shell)
    lower = (math.log(0.5) - math.log(n / 2)) / lead_exp
    upper = math.log(2.0) / lead_exp
    count = math.ceil((upper - lower) / step)
    log_t = lower + (np.arange(count) + 0.5) * step
    spec1 = np.fft.fft(f1.values, axis=0)
    spec2 = np.fft.fft(f2.values, axis=1)
    out = np.zeros((n, n), dtype=np.complex128)
    weights = step * (np.ones(count) if c is None else np.asarray(c(np.exp(log_t)), dtype=float))
    for lt, weight in zip(log_t, weights):
        ta, tb = math.exp(alpha * lt), math.exp(beta * lt)
        if piece == "first":
            m1, m2 = _cone_density(ta * k), profile(tb * k)
        else:
            m1, m2 = profile(ta * k), _cone_density(tb * k)
        if not np.any(m1) or not np.any(m2):
            continue
        m1 = m1 * np.exp(2j * np.pi * modulation.u * ta * k)
        m2 = m2 * np.exp(2j * np.pi * modulation.v * tb * k)
        a = np.fft.ifft(spec1 * m1[:, None], axis=0)
        b = np.fft.ifft(spec2 * m2[None, :], axis=1)
        out += weight * a * b
    return GridFunction2D(n, out)


def assembled_cone_apply(
    f1: GridFunction2D,
    f2: GridFunction2D,
    alpha: int = 1,
    beta: int = 2,
    quad: QuadratureSpec | None = None,
    piece: str = "first",
) -> GridFunction2D:
    """The same operator through its tabulated symbol, for comparison with :func:`model_operator`."""
    return aniso_apply(cone_symbol(alpha, beta, piece, quad), f1, f2)
