from __future__ import annotations

import math

import numpy as np
import pytest

from harmonic.errors import GridSizeError, QuadratureError
from harmonic.quadrature import CutoffSpec, QuadratureSpec, shell_nodes, temporal_count, wrap_distance


def test_quadrature_spec_validation() -> None:
    with pytest.raises(QuadratureError):
        QuadratureSpec(nodes_per_shell=8)
    with pytest.raises(QuadratureError):
        QuadratureSpec(j_min=5, j_max=4)
    with pytest.raises(GridSizeError):
        QuadratureSpec.for_grid(24)


def test_for_grid_and_refinement() -> None:
    quad = QuadratureSpec.for_grid(64)
    assert quad.j_range == (3, 8)
    assert quad.scales == [3, 4, 5, 6, 7, 8]
    assert quad.refined(2).nodes_per_shell == 64
    assert quad.with_scales(4, 4).scales == [4]
    assert quad.to_dict() == {"nodes_per_shell": 32, "j_min": 3, "j_max": 8}


def test_single_shell_weights_integrate_annulus() -> None:
    nodes = shell_nodes(QuadratureSpec(), 3, 6)
    for j in nodes.scales:
        assert float(nodes.scale_weights(j).sum()) == pytest.approx(math.log(2.0), rel=1e-4)
    assert np.allclose(nodes.merged, nodes.weights.sum(axis=0))
    assert np.all(nodes.t > 0)


def test_shell_lattice_is_shared_between_ranges() -> None:
    quad = QuadratureSpec()
    wide = shell_nodes(quad, 3, 7)
    single = shell_nodes(quad, 5, 5)
    positions = np.argmin(np.abs(wide.t[:, None] - single.t[None, :]), axis=0)
    assert np.allclose(wide.t[positions], single.t, rtol=1e-12)
    assert np.allclose(wide.scale_weights(5)[positions], single.scale_weights(5), rtol=1e-12, atol=1e-15)


def test_wrap_distance() -> None:
    assert np.allclose(wrap_distance(np.array([0.75, -0.75, 0.25, 1.0])), [-0.25, 0.25, 0.25, 0.0])


def test_cutoff_temporal_nodes_integrate_bump() -> None:
    cutoff = CutoffSpec()
    _, weights = cutoff.temporal_nodes(temporal_count(QuadratureSpec(), 32))
    assert float(weights.sum()) == pytest.approx(cutoff.temporal_integral, rel=1e-6)
    assert cutoff.temporal_integral == pytest.approx(1.0 / 6.0)


def test_cutoff_spatial_bump() -> None:
    spatial = CutoffSpec().spatial(32)
    assert spatial.shape == (32, 32)
    assert spatial[16, 16] == pytest.approx(1.0)
    assert spatial[0, 0] == 0.0
    assert np.allclose(spatial, spatial.T)


def test_cutoff_rejects_bad_ranges() -> None:
    with pytest.raises(QuadratureError):
        CutoffSpec(t_lower=0.4, t_upper=0.3)
    with pytest.raises(QuadratureError):
        CutoffSpec(t_upper=0.75)
    with pytest.raises(QuadratureError):
        CutoffSpec(width=0.9)


def test_temporal_count_is_a_multiple_of_six() -> None:
    assert temporal_count(QuadratureSpec(), 16) % 6 == 0
    assert temporal_count(QuadratureSpec(), 512) >= 1024
