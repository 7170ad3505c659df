import numpy as np
import pytest

from feshscan.grid import FOUR_PI, RadialFn, build_grid


def test_weight_sum_and_monomials():
    g = build_grid(7.0, 20, 8)
    assert np.sum(g.weights) == pytest.approx(7.0, rel=1e-12)
    unit = build_grid(1.0, 4, 6)
    assert np.sum(unit.weights * unit.nodes) == pytest.approx(0.5, abs=1e-12)
    # exact up to degree 2n - 1 per panel
    assert np.sum(unit.weights * unit.nodes**11) == pytest.approx(1.0 / 12.0, rel=1e-12)


def test_nodes_increasing_and_exclude_origin():
    g = build_grid(5.0, 12, 10, breakpoints=(1.0, 2.345))
    assert np.all(np.diff(g.nodes) > 0)
    assert g.nodes[0] > 0 and g.nodes[-1] < 5.0
    assert 2.345 in g.edges and 1.0 in g.edges


def test_breakpoint_on_uniform_edge_is_not_duplicated():
    g = build_grid(8.0, 40, 10, breakpoints=(1.0,))
    assert g.size == 400


def test_cumulative_integration_and_derivatives():
    g = build_grid(3.0, 10, 10)
    r = g.nodes
    assert np.allclose(g.cumint @ np.cos(r), np.sin(r), atol=1e-12)
    assert np.allclose(g.second_derivative(np.sin(r)), -np.sin(r), atol=1e-7)
    slopes = g.edge_slopes(np.sin(r))
    assert np.allclose(slopes[:, 0], np.cos(g.edges[:-1]), atol=1e-9)
    assert np.allclose(slopes[:, 1], np.cos(g.edges[1:]), atol=1e-9)


def test_radial_inner_product_is_3d_pairing():
    g = build_grid(40.0, 40, 10)
    u = RadialFn(g.nodes * np.exp(-g.nodes), g)  # psi = e^{-r}
    # int e^{-2r} d^3x = 4 pi / 4
    assert u.inner(u) == pytest.approx(np.pi, rel=1e-12)
    assert u.norm() == pytest.approx(np.sqrt(np.pi), rel=1e-12)
    assert np.allclose(u.psi(), np.exp(-g.nodes))
    assert g.inner(1j * u.values, u.values) == pytest.approx(-1j * np.pi)
    assert g.bilinear(1j * u.values, u.values) == pytest.approx(1j * np.pi)
    with pytest.raises(ValueError):
        RadialFn(np.zeros(3), g)
