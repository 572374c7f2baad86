import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nlhomog import ConfigError, PreconditionError, build_grid, mean, project_mean_zero


def test_unit_interval_m4_nodes_and_weight():
    g = build_grid(1, 4, 0)
    assert np.allclose(g.nodes.ravel(), [0.125, 0.375, 0.625, 0.875])
    assert g.weight == 0.25
    assert g.n_interior == g.n_total == 4


def test_2d_m3_weights_sum_to_volume():
    g = build_grid(2, 3, 0)
    assert g.n_interior == 9
    assert abs(g.weight * g.n_interior - 1.0) <= 1e-12


@pytest.mark.parametrize("dim,m", [(1, 5), (1, 128), (2, 7), (2, 24)])
def test_weights_sum_to_volume(dim, m):
    g = build_grid(dim, m, 0)
    assert abs(g.weight * g.n_interior - g.box_volume) <= 1e-12 * g.box_volume


def test_padding_arithmetic():
    g = build_grid(1, 4, 2)
    assert g.n_total == 8
    assert np.allclose(g.nodes.ravel(), [-0.375, -0.125, 0.125, 0.375, 0.625, 0.875, 1.125, 1.375])
    assert list(g.interior) == [False, False, True, True, True, True, False, False]
    assert g.pad == 0.5
    assert g.padded_volume == 2.0


@pytest.mark.parametrize("dim,m,pad", [(3, 4, 0), (0, 4, 0), (1, 1, 0), (1, 4, -1)])
def test_rejects_bad_construction(dim, m, pad):
    with pytest.raises(ConfigError):
        build_grid(dim, m, pad)


def test_node_index_roundtrip():
    g = build_grid(2, 5, 1)
    for i in (0, 3, g.n_total - 1):
        assert g.node_index(g.nodes[i]) == i
    with pytest.raises(PreconditionError):
        g.node_index([10.0, 10.0])
    with pytest.raises(PreconditionError):
        g.node_index([0.11, 0.11])  # between nodes


def test_mean_and_projection_examples():
    g = build_grid(1, 4, 0)
    u = g.field(3.0)
    assert mean(u) == pytest.approx(3.0, abs=1e-15)
    assert np.allclose(project_mean_zero(u).values, 0.0)

    lin = g.field(lambda x: x[0] - 0.5)
    assert abs(mean(lin)) <= 1e-15
    assert np.allclose(project_mean_zero(lin).values, lin.values)

    spike = g.field(np.array([1.0, 0.0, 0.0, 0.0]))
    assert mean(spike) == pytest.approx(0.25)
    assert np.allclose(project_mean_zero(spike).values, [0.75, -0.25, -0.25, -0.25])


def test_projection_leaves_padded_values():
    g = build_grid(1, 4, 2)
    u = g.interior_field([1.0, 2.0, 3.0, 4.0])
    p = project_mean_zero(u)
    assert p.vanishes_on_pad()
    assert abs(mean(p)) <= 1e-13


@settings(max_examples=50, derandomize=True, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=8, max_size=8), st.integers(0, 2))
def test_projection_idempotent(values, pad):
    g = build_grid(1, 8, pad)
    u = g.interior_field(np.asarray(values))
    once = project_mean_zero(u)
    twice = project_mean_zero(once)
    scale = max(1.0, float(np.max(np.abs(u.values))))
    assert abs(mean(once)) <= 1e-13 * scale
    assert np.max(np.abs(twice.values - once.values)) <= 1e-12 * scale


def test_field_shape_and_grid_mismatch():
    g = build_grid(1, 4, 0)
    other = build_grid(1, 8, 0)
    with pytest.raises(PreconditionError):
        g.field(np.ones(5))
    with pytest.raises(PreconditionError):
        g.field(1.0).inner(other.field(1.0))


def test_field_norm_uses_quadrature():
    g = build_grid(1, 16, 0)
    u = g.field(2.0)
    assert u.norm_l2() == pytest.approx(2.0, rel=1e-14)
