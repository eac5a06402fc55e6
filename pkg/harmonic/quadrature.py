from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from harmonic.errors import QuadratureError
from harmonic.torus_grid import check_grid_size
from harmonic.windows import build_window, window

_LN2 = math.log(2.0)


@dataclass(frozen=True)
class QuadratureSpec:
    """Dyadic-shell rule for the t variable: scales 2^{-j} with j in [j_min, j_max]."""

    nodes_per_shell: int = 32
    j_min: int = 3
    j_max: int = 7

    def __post_init__(self) -> None:
        if self.nodes_per_shell < 16:
            raise QuadratureError(f"need at least 16 nodes per dyadic shell, got {self.nodes_per_shell}")
        if self.j_min > self.j_max:
            raise QuadratureError(f"empty scale range [{self.j_min}, {self.j_max}]")

    @classmethod
    def for_grid(cls, n: int, nodes_per_shell: int = 32) -> QuadratureSpec:
        n = check_grid_size(n)
        return cls(nodes_per_shell=nodes_per_shell, j_min=3, j_max=int(math.log2(n)) + 2)

    @property
    def j_range(self) -> tuple[int, int]:
        return (self.j_min, self.j_max)

    @property
    def scales(self) -> list[int]:
        return list(range(self.j_min, self.j_max + 1))

    def refined(self, factor: int) -> QuadratureSpec:
        return replace(self, nodes_per_shell=self.nodes_per_shell * int(factor))

    def with_scales(self, j_min: int, j_max: int) -> QuadratureSpec:
        return replace(self, j_min=int(j_min), j_max=int(j_max))

    def to_dict(self) -> dict[str, int]:
        return {"nodes_per_shell": self.nodes_per_shell, "j_min": self.j_min, "j_max": self.j_max}


@dataclass(frozen=True, eq=False)
class ShellNodes:
    """Midpoint nodes uniform in log t; ``weights[s, k]`` is step * psi(2^j t_k) for scale ``scales[s]``."""

    t: np.ndarray
    step: float
    scales: tuple[int, ...]
    weights: np.ndarray

    @property
    def merged(self) -> np.ndarray:
        return self.weights.sum(axis=0)

    def scale_weights(self, j: int) -> np.ndarray:
        return self.weights[self.scales.index(j)]


def shell_nodes(quad: QuadratureSpec, j_min: int | None = None, j_max: int | None = None) -> ShellNodes:
    """Nodes covering the supports of psi(2^j t) for j in [j_min, j_max].

    All ranges share one lattice in log t, so single-scale and summed rules agree node for node.
    """
    lo = quad.j_min if j_min is None else j_min
    hi = quad.j_max if j_max is None else j_max
    if lo > hi:
        raise QuadratureError(f"empty scale range [{lo}, {hi}]")
    per_octave = quad.nodes_per_shell
    step = _LN2 / per_octave
    start = -(hi + 1) * _LN2
    count = (hi - lo + 2) * per_octave
    log_t = start + (np.arange(count) + 0.5) * step
    t = np.exp(log_t)
    psi = window("annulus_psi")
    scales = tuple(range(lo, hi + 1))
    weights = np.stack([step * psi(2.0**j * t) for j in scales])
    keep = np.any(weights != 0.0, axis=0)
    return ShellNodes(t=t[keep], step=step, scales=scales, weights=weights[:, keep])


def wrap_distance(d: np.ndarray) -> np.ndarray:
    return (np.asarray(d, dtype=float) + 0.5) % 1.0 - 0.5


@dataclass(frozen=True)
class CutoffSpec:
    """Cutoff zeta(x, y, t) = spatial(x, y) * temporal(t).

    The spatial part is a tensor of eta bumps centred at (center_x, center_y) with side ``width``;
    the temporal part is tau moved onto [t_lower, t_upper].
    """

    center_x: float = 0.5
    center_y: float = 0.5
    width: float = 0.25
    eta_delta: float = 0.125
    t_lower: float = 0.25
    t_upper: float = 0.5

    def __post_init__(self) -> None:
        if not 0.0 < self.t_lower < self.t_upper <= 0.5:
            raise QuadratureError(
                f"temporal support must satisfy 0 < t_lower < t_upper <= 1/2, got [{self.t_lower}, {self.t_upper}]"
            )
        if not 0.0 < self.width * (1.0 + 2.0 * self.eta_delta) <= 1.0:
            raise QuadratureError(f"spatial bump of width {self.width} does not fit on the torus")
        build_window("spatial_eta", {"delta": self.eta_delta})

    def spatial_1d(self, z: np.ndarray, center: float) -> np.ndarray:
        eta = build_window("spatial_eta", {"delta": self.eta_delta})
        return eta(wrap_distance(np.asarray(z) - center) / self.width)

    def spatial(self, n: int) -> np.ndarray:
        coords = np.arange(n) / n
        return np.outer(self.spatial_1d(coords, self.center_x), self.spatial_1d(coords, self.center_y))

    def temporal(self, t: np.ndarray | float) -> np.ndarray:
        tau = window("bump_tau")
        z = 0.5 + 1.5 * (np.asarray(t, dtype=float) - self.t_lower) / (self.t_upper - self.t_lower)
        return tau(z)

    @property
    def temporal_integral(self) -> float:
        return (2.0 / 3.0) * (self.t_upper - self.t_lower)

    def temporal_nodes(self, count: int) -> tuple[np.ndarray, np.ndarray]:
        """Midpoint nodes on [t_lower, t_upper] with weights dt * temporal(t)."""
        dt = (self.t_upper - self.t_lower) / count
        t = self.t_lower + (np.arange(count) + 0.5) * dt
        return t, dt * self.temporal(t)

    def to_dict(self) -> dict[str, float]:
        return {
            "center_x": self.center_x,
            "center_y": self.center_y,
            "width": self.width,
            "eta_delta": self.eta_delta,
            "t_lower": self.t_lower,
            "t_upper": self.t_upper,
        }


def temporal_count(quad: QuadratureSpec, n: int) -> int:
    count = max(4 * quad.nodes_per_shell, 2 * n)
    return 6 * math.ceil(count / 6)
