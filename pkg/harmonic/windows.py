from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass, field
from functools import lru_cache
from typing import TYPE_CHECKING, Literal

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import CubicSpline

from harmonic.errors import QuadratureError, WindowError
from models.window import WindowExport, WindowKind

if TYPE_CHECKING:
    from harmonic.quadrature import QuadratureSpec


Convention = Literal["lp_dilate", "l1_dilate"]

# The smooth step is the normalized primitive of exp(-1/(v(1-v))) on (0, 1).
# Under v = (1 + tanh s) / 2 the integrand becomes exp(-4 cosh^2 s) / (2 cosh^2 s),
# which underflows outside |s| <= 3.
_S_LIMIT = 3.0
_STEP_PANELS = 3000
_PANEL_NODES = 8
_CHUNK = 1 << 18

_FOURIER_NODES = 16
_EXPORT_NODES = 1 << 14
_EXPORT_HALF_WIDTH = 8.0
_PROFILE_TABLE_NODES = 2049

_DEFAULT_PARAMS: dict[str, dict[str, float]] = {
    "plateau_phi": {},
    "annulus_psi": {},
    "annulus_psi_tilde": {"width": 0.01},
    "gauss_g": {},
    "gauss_h": {},
    "decay_theta": {},
    "mollifier_vartheta": {},
    "bump_tau": {},
    "spatial_eta": {"delta": 0.125},
    "spatial_eta_tilde": {"delta": 0.125},
}


def _step_integrand(s: np.ndarray) -> np.ndarray:
    c2 = np.cosh(s) ** 2
    return np.exp(-4.0 * c2) / (2.0 * c2)


@lru_cache(maxsize=None)
def gauss_legendre(nodes: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = leggauss(nodes)
    x.flags.writeable = False
    w.flags.writeable = False
    return x, w


@lru_cache(maxsize=1)
def _step_table() -> tuple[np.ndarray, np.ndarray, float]:
    edges = np.linspace(-_S_LIMIT, _S_LIMIT, _STEP_PANELS + 1)
    x, w = gauss_legendre(_PANEL_NODES)
    half = 0.5 * (edges[1] - edges[0])
    mids = 0.5 * (edges[:-1] + edges[1:])
    nodes = mids[:, None] + half * x[None, :]
    panel_mass = half * (_step_integrand(nodes) @ w)
    cumulative = np.concatenate([[0.0], np.cumsum(panel_mass)])
    total = float(cumulative[-1])
    return edges, cumulative, total


def _primitive(u: np.ndarray) -> np.ndarray:
    """Normalized primitive C(u) for u in (0, 1)."""
    edges, cumulative, total = _step_table()
    width = edges[1] - edges[0]
    with np.errstate(divide="ignore"):
        s = np.clip(np.arctanh(2.0 * u - 1.0), -_S_LIMIT, _S_LIMIT)
    idx = np.clip(np.floor((s + _S_LIMIT) / width).astype(np.int64), 0, _STEP_PANELS - 1)
    left = edges[idx]
    x, w = gauss_legendre(_PANEL_NODES)
    half = 0.5 * (s - left)
    nodes = left[:, None] + half[:, None] * (x[None, :] + 1.0)
    partial = half * (_step_integrand(nodes) @ w)
    return (cumulative[idx] + partial) / total


def smooth_step(u: np.ndarray | float) -> np.ndarray:
    """C-infinity step: 0 for u <= 0, 1 for u >= 1, and S(u) + S(1 - u) = 1."""
    arr = np.asarray(u, dtype=float)
    flat = arr.reshape(-1)
    out = np.empty(flat.shape, dtype=float)
    for start in range(0, flat.size, _CHUNK):
        chunk = flat[start : start + _CHUNK]
        inner = (chunk > 0.0) & (chunk < 1.0)
        values = np.where(chunk >= 1.0, 1.0, 0.0)
        if np.any(inner):
            v = chunk[inner]
            values[inner] = 0.5 * (_primitive(v) + 1.0 - _primitive(1.0 - v))
        out[start : start + _CHUNK] = np.clip(values, 0.0, 1.0)
    return out.reshape(arr.shape)


def _plateau(z: np.ndarray) -> np.ndarray:
    return 1.0 - smooth_step(np.abs(z) - 1.0)


def _annulus(z: np.ndarray) -> np.ndarray:
    return _plateau(z) - _plateau(2.0 * z)


def _annulus_tilde(z: np.ndarray, width: float) -> np.ndarray:
    a = np.abs(z)
    return smooth_step((a - (0.5 - width)) / width) * (1.0 - smooth_step((a - 2.0) / width))


def _gauss_g(x: np.ndarray) -> np.ndarray:
    return np.exp(-np.pi * x * x)


def _gauss_h(x: np.ndarray) -> np.ndarray:
    return -2.0 * np.pi * x * np.exp(-np.pi * x * x)


def _decay_theta(x: np.ndarray) -> np.ndarray:
    return (1.0 + np.abs(x)) ** -10


def _vartheta(z: np.ndarray) -> np.ndarray:
    # the plateau integrates to 3
    return _plateau(z) / 3.0


def _tau(z: np.ndarray) -> np.ndarray:
    rise = smooth_step(2.0 * (z - 0.5))
    fall = 1.0 - smooth_step(2.0 * (z - 1.5))
    return np.where(z < 1.0, rise, np.where(z > 1.5, fall, 1.0))


def _eta(z: np.ndarray, delta: float) -> np.ndarray:
    return smooth_step((z + 0.5 + delta) / (2.0 * delta)) * smooth_step((0.5 + delta - z) / (2.0 * delta))


def _eta_tilde(z: np.ndarray, delta: float) -> np.ndarray:
    return smooth_step((z + 0.5 + 2.0 * delta) / delta) * smooth_step((0.5 + 2.0 * delta - z) / delta)


@dataclass(frozen=True)
class SampledWindow:
    """A named 1D profile; ``support`` is None when the profile lives on all reals."""

    kind: WindowKind
    params: dict[str, float] = field(default_factory=dict)
    support: tuple[float, float] | None = None

    def __call__(self, z: np.ndarray | float) -> np.ndarray:
        arr = np.asarray(z, dtype=float)
        kind = self.kind
        if kind == "plateau_phi":
            return _plateau(arr)
        if kind == "annulus_psi":
            return _annulus(arr)
        if kind == "annulus_psi_tilde":
            return _annulus_tilde(arr, self.params["width"])
        if kind == "gauss_g":
            return _gauss_g(arr)
        if kind == "gauss_h":
            return _gauss_h(arr)
        if kind == "decay_theta":
            return _decay_theta(arr)
        if kind == "mollifier_vartheta":
            return _vartheta(arr)
        if kind == "bump_tau":
            return _tau(arr)
        if kind == "spatial_eta":
            return _eta(arr, self.params["delta"])
        if kind == "spatial_eta_tilde":
            return _eta_tilde(arr, self.params["delta"])
        raise WindowError(f"unknown window kind: {kind!r}")

    @property
    def feature_width(self) -> float:
        """Shortest transition length of the profile, used to size quadrature panels."""
        if self.kind == "annulus_psi_tilde":
            return self.params["width"]
        if self.kind == "spatial_eta":
            return 2.0 * self.params["delta"]
        if self.kind == "spatial_eta_tilde":
            return self.params["delta"]
        if self.kind in ("annulus_psi", "bump_tau"):
            return 0.5
        return 1.0


def _support(kind: str, params: dict[str, float]) -> tuple[float, float] | None:
    if kind in ("plateau_phi", "annulus_psi", "mollifier_vartheta"):
        return (-2.0, 2.0)
    if kind == "annulus_psi_tilde":
        return (-2.0 - params["width"], 2.0 + params["width"])
    if kind == "bump_tau":
        return (0.5, 2.0)
    if kind == "spatial_eta":
        return (-0.5 - params["delta"], 0.5 + params["delta"])
    if kind == "spatial_eta_tilde":
        return (-0.5 - 2.0 * params["delta"], 0.5 + 2.0 * params["delta"])
    return None


def build_window(kind: str, params: dict[str, float] | None = None) -> SampledWindow:
    if kind not in _DEFAULT_PARAMS:
        raise WindowError(f"unknown window kind: {kind!r}")
    defaults = _DEFAULT_PARAMS[kind]
    supplied = dict(params or {})
    unknown = sorted(set(supplied) - set(defaults))
    if unknown:
        raise WindowError(f"{kind} does not take parameters {unknown}")
    merged = {**defaults, **{key: float(value) for key, value in supplied.items()}}
    if "width" in merged and not 0.0 < merged["width"] <= 0.25:
        raise WindowError(f"annulus_psi_tilde width must lie in (0, 1/4], got {merged['width']}")
    if "delta" in merged and not 0.0 < merged["delta"] <= 0.25:
        raise WindowError(f"{kind} delta must lie in (0, 1/4], got {merged['delta']}")
    return SampledWindow(kind=kind, params=merged, support=_support(kind, merged))


@lru_cache(maxsize=None)
def window(kind: str) -> SampledWindow:
    """Window with default parameters, shared across callers."""
    return build_window(kind)


@dataclass(frozen=True)
class ScaledWindow:
    base: SampledWindow
    scale: float
    center: float = 0.0
    convention: Convention = "lp_dilate"

    def __post_init__(self) -> None:
        if not self.scale > 0:
            raise WindowError(f"scale must be positive, got {self.scale}")

    def __call__(self, z: np.ndarray | float) -> np.ndarray:
        arr = (np.asarray(z, dtype=float) - self.center) / self.scale
        if self.convention == "lp_dilate":
            return self.base(arr)
        return self.base(arr) / self.scale


def scale_window(
    base: SampledWindow,
    scale: float,
    center: float = 0.0,
    convention: Convention = "lp_dilate",
) -> ScaledWindow:
    if convention not in ("lp_dilate", "l1_dilate"):
        raise WindowError(f"unknown dilation convention: {convention!r}")
    return ScaledWindow(base=base, scale=float(scale), center=float(center), convention=convention)


def dyadic(kind: str, j: int) -> ScaledWindow:
    """phi_j, psi_j and friends: w(2^{-j} z)."""
    return scale_window(window(kind), 2.0**j)


def window_fourier(w: SampledWindow, xi: np.ndarray | float) -> np.ndarray:
    """Continuous Fourier transform int w(x) exp(-2 pi i x xi) dx."""
    xi_arr = np.asarray(xi, dtype=float)
    if w.kind == "gauss_g":
        return np.exp(-np.pi * xi_arr**2).astype(np.complex128)
    if w.kind == "gauss_h":
        return 2j * np.pi * xi_arr * np.exp(-np.pi * xi_arr**2)
    if w.support is None:
        raise WindowError(f"no Fourier rule for {w.kind}: support is unbounded")
    lower, upper = w.support
    length = upper - lower
    reach = float(np.max(np.abs(xi_arr))) if xi_arr.size else 0.0
    panels = 4 * math.ceil(length / w.feature_width) + math.ceil(2.0 * length * reach)
    edges = np.linspace(lower, upper, panels + 1)
    x, weights = gauss_legendre(_FOURIER_NODES)
    half = 0.5 * (edges[1] - edges[0])
    nodes = (0.5 * (edges[:-1] + edges[1:])[:, None] + half * x[None, :]).reshape(-1)
    node_weights = np.tile(half * weights, panels) * w(nodes)
    flat = xi_arr.reshape(-1)
    out = np.empty(flat.shape, dtype=np.complex128)
    step = max(1, _CHUNK // nodes.size)
    for start in range(0, flat.size, step):
        block = flat[start : start + step]
        out[start : start + step] = np.exp(-2j * np.pi * np.outer(block, nodes)) @ node_weights
    return out.reshape(xi_arr.shape)


def export_window(w: SampledWindow, nodes: int = _EXPORT_NODES) -> WindowExport:
    lower, upper = w.support if w.support is not None else (-_EXPORT_HALF_WIDTH, _EXPORT_HALF_WIDTH)
    grid = np.linspace(lower, upper, nodes)
    return WindowExport(
        kind=w.kind,
        params=dict(w.params),
        lower=float(lower),
        upper=float(upper),
        nodes=[float(v) for v in grid],
        values=[float(v) for v in w(grid)],
    )


def log_panels(lower: float, upper: float, nodes_per_shell: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes in w on [lower, upper], two panels per half octave."""
    shells = max(1, math.ceil((upper - lower) / math.log(2.0) - 1e-12))
    panels = 4 * shells
    per_panel = max(4, nodes_per_shell // 2)
    x, weights = gauss_legendre(per_panel)
    edges = np.linspace(lower, upper, panels + 1)
    half = 0.5 * (edges[1:] - edges[:-1])
    mids = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mids[:, None] + half[:, None] * x[None, :]).reshape(-1)
    node_weights = (half[:, None] * weights[None, :]).reshape(-1)
    return nodes, node_weights


def _cone_density(log_u: np.ndarray) -> np.ndarray:
    u = np.exp(log_u)
    return _annulus(u) * _gauss_h(u) ** 2


def _check_density(quad: QuadratureSpec) -> None:
    if quad.nodes_per_shell < 16:
        raise QuadratureError(f"need at least 16 nodes per dyadic shell, got {quad.nodes_per_shell}")


def _tail_integral(lower: float, nodes_per_shell: int) -> float:
    upper = math.log(2.0)
    if lower >= upper:
        return 0.0
    nodes, weights = log_panels(lower, upper, nodes_per_shell)
    return float(weights @ _cone_density(nodes))


@dataclass(frozen=True)
class ConeProfile:
    """Tail integral int_1^inf psi(s^a z) h(s^a z)^2 ds/s, tabulated in log |z| on [1/2, 2]."""

    alpha: int
    constant: float
    spline: Callable[[np.ndarray], np.ndarray]

    def __call__(self, z: np.ndarray | float) -> np.ndarray:
        a = np.clip(np.abs(np.asarray(z, dtype=float)), 0.5, 2.0)
        return np.asarray(self.spline(np.log(a)), dtype=float) / self.alpha


@lru_cache(maxsize=32)
def _profile_table(nodes_per_shell: int) -> tuple[np.ndarray, np.ndarray]:
    grid = np.linspace(math.log(0.5), math.log(2.0), _PROFILE_TABLE_NODES)
    table = np.array([_tail_integral(float(w), nodes_per_shell) for w in grid])
    table[-1] = 0.0
    return grid, table


def cone_profile(alpha: int, quad: QuadratureSpec) -> tuple[ConeProfile, float]:
    if int(alpha) != alpha or alpha < 1:
        raise WindowError(f"cone exponent must be a positive integer, got {alpha!r}")
    _check_density(quad)
    grid, table = _profile_table(quad.nodes_per_shell)
    constant = float(table[0]) / alpha
    profile = ConeProfile(alpha=int(alpha), constant=constant, spline=CubicSpline(grid, table))
    return profile, constant


def cone_constant(alpha: int, xi: float, quad: QuadratureSpec) -> float:
    """int_0^inf psi(t^a xi) h(t^a xi)^2 dt/t by quadrature in log t over the support."""
    if int(alpha) != alpha or alpha < 1:
        raise WindowError(f"cone exponent must be a positive integer, got {alpha!r}")
    _check_density(quad)
    if xi == 0:
        raise WindowError("cone constant needs a nonzero frequency")
    log_xi = math.log(abs(xi))
    lower = (math.log(0.5) - log_xi) / alpha
    upper = (math.log(2.0) - log_xi) / alpha
    nodes, weights = log_panels(alpha * lower + log_xi, alpha * upper + log_xi, quad.nodes_per_shell)
    log_t = (nodes - log_xi) / alpha
    return float((weights / alpha) @ _cone_density(alpha * log_t + log_xi))
