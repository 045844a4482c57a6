import math

import numpy as np
import pytest

from tvk.fields import (Domain, FieldError, GridField, PolygonalField, SimpleSetSpec, disc, grid_gradient,
                        interval, make_grid, make_indicator, make_piecewise, piecewise_constant_1d,
                        polygon_moments, quotient_normalize, rasterize, rect_poly, rectangle,
                        region_adjacency, sample_function, square)

DOM3 = rectangle(0, 3, 0, 3)


def test_domain_validation():
    assert disc(radius=2).measure == pytest.approx(4 * math.pi)
    with pytest.raises(FieldError):
        Domain("interval", (1, 0))
    with pytest.raises(FieldError):
        Domain("disc", (0, 0, -1))
    with pytest.raises(FieldError):
        Domain("triangle", (0, 1, 2))
    with pytest.raises(FieldError):
        rectangle(0, math.inf, 0, 1)


def test_unit_square_moments():
    expected = np.array([[1 / 3, 1 / 4, 1 / 2], [1 / 4, 1 / 3, 1 / 2], [1 / 2, 1 / 2, 1]])
    np.testing.assert_allclose(polygon_moments(rect_poly(0, 1, 0, 1)), expected, atol=1e-15)


def test_clockwise_region_is_reoriented():
    cw = rect_poly(1, 2, 1, 2)[::-1]
    u = PolygonalField(DOM3, [cw], [[1.0]])
    assert u.region_areas[0] == pytest.approx(1.0)
    assert u.background_area == pytest.approx(8.0)


def test_square_interfaces():
    u = make_indicator(SimpleSetSpec(DOM3, (square((1.5, 1.5), 1),)), [2.0])
    e = u.edges
    assert e.length.sum() == pytest.approx(4.0)
    # every interface separates the square (cell 0) from the background (cell 1)
    assert set(map(tuple, np.stack([e.minus, e.plus], 1))) <= {(0, 1), (1, 0)}
    # normals point from minus into plus
    mids = 0.5 * (e.p0 + e.p1)
    probe = mids + 1e-3 * e.normal
    np.testing.assert_array_equal(u.cell_index(probe), e.plus)


def test_boundary_edges_are_not_interfaces():
    u = make_indicator(SimpleSetSpec(DOM3, (rect_poly(0, 1, 1, 2),)), [1.0])
    assert u.edges.length.sum() == pytest.approx(3.0)


def test_overlap_and_escape_rejected():
    with pytest.raises(FieldError, match="overlap"):
        PolygonalField(DOM3, [rect_poly(0, 2, 0, 2), rect_poly(1, 3, 1, 3)], [[1.0], [2.0]])
    with pytest.raises(FieldError, match="leaves"):
        PolygonalField(DOM3, [rect_poly(2, 4, 0, 1)], [[1.0]])


def test_1d_tiling_enforced():
    dom = interval(0, 1)
    with pytest.raises(FieldError):
        PolygonalField(dom, [(0, 0.4), (0.5, 1)], [[0.0], [1.0]])
    with pytest.raises(FieldError):
        piecewise_constant_1d(dom, [1.2], [[0.0], [1.0]])
    u = piecewise_constant_1d(dom, [0.25, 0.75], [[0.0], [1.0], [3.0]])
    np.testing.assert_allclose(u.evaluate([[0.1], [0.5], [0.9]])[:, 0], [0, 1, 3])


def test_exact_l2_inner_product():
    u = make_indicator(SimpleSetSpec(DOM3, (square((1.5, 1.5), 1),)), [1.0, 2.0])
    assert u.l2_norm() ** 2 == pytest.approx(5.0)
    rot = PolygonalField(DOM3, [rect_poly(0, 1, 0, 1)], [{"skew": 1.0, "shift": [0, 0]}], n=2)
    # |(y, -x)|^2 = x^2 + y^2 integrated over the unit square
    assert rot.l2_norm() ** 2 == pytest.approx(2 / 3)


def test_quotient_removes_constants():
    u = make_indicator(SimpleSetSpec(DOM3, (square((1.5, 1.5), 1),)), [1.0, -2.0])
    q = quotient_normalize(u, "constants")
    for k in range(2):
        const = u.with_values(np.eye(2)[k][None].repeat(u.n_cells, 0))
        assert q.l2_inner(const) == pytest.approx(0.0, abs=1e-12)


def test_quotient_removes_rigid_motions():
    u = make_indicator(SimpleSetSpec(DOM3, (square((1, 1), 1),)), [1.0, 0.0])
    q = quotient_normalize(u, "rigid")
    rot = u.with_affine(np.broadcast_to(np.array([[0, -1, 0], [1, 0, 0]], float), u.affine.shape))
    assert q.l2_inner(rot) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(FieldError):
        quotient_normalize(u, "affine")


def test_simplicity():
    one = SimpleSetSpec(DOM3, (square((1.5, 1.5), 1),))
    two = SimpleSetSpec(DOM3, (square((0.8, 0.8), 0.5), square((2, 2), 0.5)))
    corner = SimpleSetSpec(DOM3, (rect_poly(0.5, 1.5, 0.5, 1.5), rect_poly(1.5, 2.5, 1.5, 2.5)))
    frame = SimpleSetSpec(DOM3, (rect_poly(0.5, 2.5, 0.5, 1), rect_poly(0.5, 2.5, 2, 2.5),
                                 rect_poly(0.5, 1, 1, 2), rect_poly(2, 2.5, 1, 2)))
    assert one.check_simplicity() == (True, True)
    assert two.check_simplicity() == (False, True)
    # sets touching at a single point are still two pieces
    assert corner.check_simplicity()[0] is False
    assert frame.check_simplicity() == (True, False)


def test_set_validation():
    with pytest.raises(FieldError):
        SimpleSetSpec(DOM3, (rect_poly(2, 4, 0, 1),))
    with pytest.raises(FieldError):
        SimpleSetSpec(DOM3, (rect_poly(0, 3, 0, 3),))
    with pytest.raises(FieldError):
        SimpleSetSpec(DOM3, (np.array([[0, 0], [1, 1], [1, 0], [0, 1]]),))


def test_make_piecewise_fills_enclosed_holes():
    frame = [rect_poly(0.5, 2.5, 0.5, 1), rect_poly(0.5, 2.5, 2, 2.5), rect_poly(0.5, 1, 1, 2),
             rect_poly(2, 2.5, 1, 2)]
    u = make_piecewise(DOM3, [(frame, [1.0])])
    # the enclosed hole becomes an explicit zero region
    assert len(u.regions) == 5
    assert u.evaluate([[1.5, 1.5]])[0, 0] == 0.0
    adj = region_adjacency(u)
    assert 5 not in adj[4]


def test_round_trips():
    u = make_indicator(SimpleSetSpec(DOM3, (square((1.5, 1.5), 1),)), [1.0, 2.0])
    v = PolygonalField.from_dict(u.to_dict())
    np.testing.assert_array_equal(v.affine, u.affine)
    g = sample_function(disc(), (8, 8), lambda x: x)
    h = GridField.from_dict(g.to_dict())
    np.testing.assert_array_equal(h.values, g.values)
    np.testing.assert_array_equal(h.mask, g.mask)


def test_disc_grid_avoids_centre_and_masks():
    g = make_grid(disc(), (64, 64))
    c = g.centers()
    assert np.min(np.linalg.norm(c, axis=-1)) > g.h[0] / 4
    assert g.mask.sum() * g.cell_volume == pytest.approx(math.pi, rel=0.02)
    odd = make_grid(disc(), (63, 63))
    assert odd.lower != make_grid(disc(), (63, 63), avoid_center=False).lower


def test_rasterize_matches_evaluate():
    u = make_indicator(SimpleSetSpec(DOM3, (square((1.5, 1.5), 1),)), [1.0])
    g = rasterize(u, (30, 30))
    assert g.values.sum() * g.cell_volume == pytest.approx(1.0)


def test_forward_gradient_of_linear_field():
    g = sample_function(rectangle(0, 1, 0, 2), (16, 8), lambda x: np.stack([2 * x[..., 0] - x[..., 1]], -1))
    grad, valid = grid_gradient(g)
    assert valid.sum() == 15 * 7
    np.testing.assert_allclose(grad[valid][:, 0], np.tile([2.0, -1.0], (105, 1)), atol=1e-12)


def test_grid_shape_checked():
    with pytest.raises(FieldError):
        make_grid(rectangle(0, 1, 0, 1), (4,))
