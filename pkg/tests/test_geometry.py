import numpy as np
import pytest

from incx.errors import DegenerateBox
from incx.geometry import (
    BBox,
    Point2,
    ScaleTranslate,
    bbox_center,
    bbox_of_points,
    compose,
    iou,
    transform_from_boxes,
)


def test_bbox_center_midpoint():
    assert bbox_center(BBox(0, 0, 2, 4)) == Point2(1, 2)


def test_bbox_center_degenerate_point_box():
    assert bbox_center(BBox(5, 5, 5, 5)) == Point2(5, 5)


def test_bbox_center_symmetric():
    assert bbox_center(BBox(-3, 1, 3, 9)) == Point2(0, 5)


def test_bbox_rejects_inverted():
    with pytest.raises(ValueError):
        BBox(1, 0, 0, 2)


def test_bbox_rejects_non_finite():
    with pytest.raises(ValueError):
        BBox(0, 0, float("inf"), 1)


def test_iou_identical_boxes():
    b = BBox(2, 3, 7, 9)
    assert iou(b, b) == 1.0


def test_iou_disjoint():
    assert iou(BBox(0, 0, 1, 1), BBox(5, 5, 6, 6)) == 0.0


def test_iou_quarter_overlap():
    # intersection 1, union 4 + 4 - 1 = 7
    assert iou(BBox(0, 0, 2, 2), BBox(1, 1, 3, 3)) == pytest.approx(1 / 7, abs=1e-12)


def test_iou_zero_area_boxes():
    z = BBox(1, 1, 1, 1)
    assert iou(z, z) == 0.0


def test_iou_symmetric_and_bounded(rng):
    for _ in range(200):
        a = _random_box(rng)
        b = _random_box(rng)
        ab = iou(a, b)
        assert ab == iou(b, a)
        assert 0.0 <= ab <= 1.0


def _random_box(rng, span=100.0):
    u0, v0 = rng.uniform(-span, span, size=2)
    w, h = rng.uniform(0.0, span / 2, size=2)
    return BBox(u0, v0, u0 + w, v0 + h)


def test_transform_identity_when_boxes_equal():
    b = BBox(3, 4, 9, 16)
    t = transform_from_boxes(b, b)
    assert t.gamma_u == 1.0 and t.gamma_v == 1.0
    assert t.mu == bbox_center(b)
    p = Point2(17.5, -2.25)
    assert t.apply(p) == p


def test_transform_example_scale_and_shift():
    t = transform_from_boxes(BBox(0, 0, 10, 20), BBox(100, 50, 120, 60))
    assert (t.gamma_u, t.gamma_v) == (2.0, 0.5)
    assert t.anchor == Point2(5, 10)
    assert t.mu == Point2(110, 55)
    # corner (0,0) of prev lands on corner (100,50) of next
    got = t.apply(Point2(0, 0))
    assert (got.u, got.v) == (100.0, 50.0)


def test_transform_pure_translation():
    t = transform_from_boxes(BBox(0, 0, 4, 4), BBox(1, 1, 5, 5))
    assert (t.gamma_u, t.gamma_v) == (1.0, 1.0)
    got = t.apply(Point2(0.25, 3.0))
    assert (got.u, got.v) == (1.25, 4.0)


def test_transform_rejects_degenerate_prev():
    with pytest.raises(DegenerateBox):
        transform_from_boxes(BBox(0, 0, 0, 5), BBox(0, 0, 1, 1))


def test_corner_mapping_random_boxes(rng):
    for _ in range(300):
        prev = _positive_box(rng)
        nxt = _random_box(rng)
        t = transform_from_boxes(prev, nxt)
        mapped = [t.apply(c) for c in prev.corners()]
        expected = nxt.corners()
        for m, e in zip(mapped, expected):
            assert abs(m.u - e.u) <= 1e-9
            assert abs(m.v - e.v) <= 1e-9


def _positive_box(rng, span=100.0):
    u0, v0 = rng.uniform(-span, span, size=2)
    w, h = rng.uniform(0.5, span / 2, size=2)
    return BBox(u0, v0, u0 + w, v0 + h)


def test_invert_round_trip_example():
    t = ScaleTranslate(2.0, 0.5, mu=Point2(110, 55), anchor=Point2(5, 10))
    p = Point2(3.7, -1.2)
    back = t.invert().apply(t.apply(p))
    assert abs(back.u - p.u) <= 1e-12
    assert abs(back.v - p.v) <= 1e-12


def test_invert_round_trip_random(rng):
    for _ in range(300):
        t = ScaleTranslate(
            float(rng.uniform(0.1, 8.0)), float(rng.uniform(0.1, 8.0)),
            mu=Point2(*rng.uniform(-100, 100, size=2)),
            anchor=Point2(*rng.uniform(-100, 100, size=2)))
        p = Point2(*rng.uniform(-1e4, 1e4, size=2))
        back = t.invert().apply(t.apply(p))
        assert abs(back.u - p.u) <= 1e-9 * max(1.0, abs(p.u))
        assert abs(back.v - p.v) <= 1e-9 * max(1.0, abs(p.v))


def test_scale_must_be_positive():
    with pytest.raises(ValueError):
        ScaleTranslate(0.0, 1.0, mu=Point2(0, 0), anchor=Point2(0, 0))
    with pytest.raises(ValueError):
        ScaleTranslate(1.0, -2.0, mu=Point2(0, 0), anchor=Point2(0, 0))


def test_compose_matches_sequential_application(rng):
    for _ in range(200):
        t1 = ScaleTranslate(
            float(rng.uniform(0.2, 4.0)), float(rng.uniform(0.2, 4.0)),
            mu=Point2(*rng.uniform(-50, 50, size=2)),
            anchor=Point2(*rng.uniform(-50, 50, size=2)))
        t2 = ScaleTranslate(
            float(rng.uniform(0.2, 4.0)), float(rng.uniform(0.2, 4.0)),
            mu=Point2(*rng.uniform(-50, 50, size=2)),
            anchor=Point2(*rng.uniform(-50, 50, size=2)))
        p = Point2(*rng.uniform(-100, 100, size=2))
        seq = t2.apply(t1.apply(p))
        one = compose(t2, t1).apply(p)
        assert abs(seq.u - one.u) <= 1e-9 * max(1.0, abs(seq.u))
        assert abs(seq.v - one.v) <= 1e-9 * max(1.0, abs(seq.v))


def test_center_function_of_point_set_matches_union_box(rng):
    # the center of a point cloud's tight box equals the coordinate-wise
    # midpoint of extremes
    pts = [Point2(*rng.uniform(-20, 20, size=2)) for _ in range(50)]
    box = bbox_of_points(pts)
    c = bbox_center(box)
    us = np.array([p.u for p in pts])
    vs = np.array([p.v for p in pts])
    assert c.u == pytest.approx((us.max() + us.min()) / 2, abs=1e-12)
    assert c.v == pytest.approx((vs.max() + vs.min()) / 2, abs=1e-12)


def test_apply_bbox_maps_corners():
    t = transform_from_boxes(BBox(0, 0, 10, 20), BBox(100, 50, 120, 60))
    out = t.apply_bbox(BBox(0, 0, 10, 20))
    assert (out.u_min, out.v_min, out.u_max, out.v_max) == (100, 50, 120, 60)
