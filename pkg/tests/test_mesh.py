import numpy as np
import pytest

from platehomog.errors import InvalidArgumentError
from platehomog.mesh import (QUAD_2x2, build_interval_mesh, build_rect_mesh, gauss_1d,
                             gauss_quad, periodic_map)


def test_single_cell():
    m = build_rect_mesh((0, 1), (-0.5, 0.5), 1, 1)
    assert m.n_nodes == 4 and m.n_cells == 1
    assert (m.hx, m.hy) == (1.0, 1.0)


def test_node_count_64():
    m = build_rect_mesh((0, 1), (-0.5, 0.5), 64, 64)
    assert m.n_nodes == 65**2
    assert m.n_cells == 64**2


def test_lexicographic_nodes_by_hand():
    m = build_rect_mesh((0, 2), (-0.5, 0.5), 4, 2)
    assert (m.hx, m.hy) == (0.5, 0.5)
    expected = [(0.5 * i, -0.5 + 0.5 * j) for j in range(3) for i in range(5)]
    np.testing.assert_allclose(m.nodes, expected)
    assert m.node_index(2, 0) == 2
    np.testing.assert_allclose(m.nodes[m.node_index(2, 1)], [1.0, 0.0])
    # counter-clockwise corners of the first cell
    np.testing.assert_array_equal(m.cells[0], [0, 1, 6, 5])


@pytest.mark.parametrize("args", [((0, 1), (0, 1), 0, 1), ((0, 1), (0, 1), 2.5, 1),
                                  ((1, 1), (0, 1), 2, 2), ((0, 1), (1, 0), 2, 2)])
def test_invalid_meshes(args):
    with pytest.raises(InvalidArgumentError):
        build_rect_mesh(*args)


def test_cells_identical_rectangles():
    m = build_rect_mesh((0, 3), (-0.5, 0.5), 6, 4)
    corners = m.nodes[m.cells]
    np.testing.assert_allclose(corners[:, 2] - corners[:, 0],
                               np.broadcast_to([m.hx, m.hy], (m.n_cells, 2)))


def test_quadrature_exactness():
    g = gauss_1d(3)
    assert g.measure == pytest.approx(2.0)
    assert g.weights @ g.points**4 == pytest.approx(2 / 5)
    q = gauss_quad(2)
    assert q.weights @ (q.points[:, 0] ** 2 * q.points[:, 1] ** 2) == pytest.approx(4 / 9)


def test_mesh_quadrature_integrates_polynomials():
    m = build_rect_mesh((0, 2), (-0.5, 0.5), 3, 5)
    X = m.quadrature_points(QUAD_2x2)
    w = m.quadrature_weights(QUAD_2x2)
    assert np.einsum("q,cq->", w, X[..., 0] ** 2 * X[..., 1] ** 2) == pytest.approx(8 / 3 / 12)
    assert m.lumped_weights().sum() == pytest.approx(m.area)


@pytest.mark.parametrize("nx, ny, pairs, reduced", [(1, 1, 2, 2), (4, 2, 3, 12)])
def test_periodic_map_counts(nx, ny, pairs, reduced):
    pm = periodic_map(build_rect_mesh((0, 1), (-0.5, 0.5), nx, ny))
    assert len(pm.slaves) == pairs == len(pm.masters)
    assert pm.n_reduced == reduced


def test_periodic_round_trip(rng):
    m = build_rect_mesh((0, 1), (-0.5, 0.5), 5, 3)
    pm = periodic_map(m)
    for comps in (1, 2):
        v = rng.standard_normal(pm.n_reduced * comps)
        np.testing.assert_array_equal(pm.reduce(pm.expand(v, comps), comps), v)
    full = pm.expand(np.arange(pm.n_reduced))
    np.testing.assert_array_equal(full[pm.slaves], full[pm.masters])


def test_locate_and_boundaries():
    m = build_rect_mesh((0, 1), (-0.5, 0.5), 4, 4)
    ci, cj, s, t = m.locate(np.array([0.3, 1.0]), np.array([0.1, 0.5]))
    np.testing.assert_array_equal(ci, [1, 3])
    np.testing.assert_array_equal(cj, [2, 3])
    np.testing.assert_allclose(s, [0.2, 1.0])
    np.testing.assert_allclose(t, [0.4, 1.0])
    assert len(m.boundary_nodes("left")) == 5
    with pytest.raises(InvalidArgumentError):
        m.boundary_nodes("front")


def test_interval_mesh():
    im = build_interval_mesh(2.0, 8)
    assert im.h == 0.25
    assert len(im.nodes) == 9
    with pytest.raises(InvalidArgumentError):
        build_interval_mesh(1.0, 0)
