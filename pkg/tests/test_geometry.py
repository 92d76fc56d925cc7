import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fintrack import BBox, Point2, iou, segment_intersection, tip_ratio
from fintrack.geometry import boxes_to_array, iou_matrix

from conftest import box


def parametric_oracle(p1, p2, q1, q2):
    """Independent check: solve p1 + t(p2-p1) = q1 + s(q2-q1), accept t,s in [0,1]."""
    a = np.array(
        [[p2.x - p1.x, -(q2.x - q1.x)], [p2.y - p1.y, -(q2.y - q1.y)]]
    )
    b = np.array([q1.x - p1.x, q1.y - p1.y])
    if abs(np.linalg.det(a)) < 1e-12:
        return "degenerate"
    t, s = np.linalg.solve(a, b)
    if 0.0 <= t <= 1.0 and 0.0 <= s <= 1.0:
        return Point2(p1.x + t * (p2.x - p1.x), p1.y + t * (p2.y - p1.y))
    return None


finite_coord = st.floats(-100, 100)


class TestIoU:
    def test_identical(self):
        assert iou(box(0, 0, 2, 2), box(0, 0, 2, 2)) == 1.0

    def test_disjoint(self):
        assert iou(box(0, 0, 1, 1), box(5, 5, 6, 6)) == 0.0

    def test_analytic_third(self):
        assert iou(box(0, 0, 2, 2), box(1, 0, 3, 2)) == pytest.approx(1 / 3)

    def test_zero_union(self):
        assert iou(box(0, 0, 0, 0), box(0, 0, 0, 0)) == 0.0

    @given(st.tuples(finite_coord, finite_coord, st.floats(0.1, 50), st.floats(0.1, 50)),
           st.tuples(finite_coord, finite_coord, st.floats(0.1, 50), st.floats(0.1, 50)))
    def test_symmetric_and_bounded(self, a, b):
        ba = box(a[0], a[1], a[0] + a[2], a[1] + a[3])
        bb = box(b[0], b[1], b[0] + b[2], b[1] + b[3])
        assert iou(ba, bb) == iou(bb, ba)
        assert 0.0 <= iou(ba, bb) <= 1.0
        assert iou(ba, ba) == 1.0

    @given(
        st.tuples(finite_coord, finite_coord, st.floats(0.1, 50), st.floats(0.1, 50)),
        st.tuples(finite_coord, finite_coord, st.floats(0.1, 50), st.floats(0.1, 50)),
        finite_coord,
        finite_coord,
        st.floats(0.1, 10),
    )
    def test_translation_and_scale_invariance(self, a, b, dx, dy, k):
        ba = box(a[0], a[1], a[0] + a[2], a[1] + a[3])
        bb = box(b[0], b[1], b[0] + b[2], b[1] + b[3])
        moved = iou(
            box(ba.x_min + dx, ba.y_min + dy, ba.x_max + dx, ba.y_max + dy),
            box(bb.x_min + dx, bb.y_min + dy, bb.x_max + dx, bb.y_max + dy),
        )
        scaled = iou(
            box(k * ba.x_min, k * ba.y_min, k * ba.x_max, k * ba.y_max),
            box(k * bb.x_min, k * bb.y_min, k * bb.x_max, k * bb.y_max),
        )
        assert moved == pytest.approx(iou(ba, bb), abs=1e-9)
        assert scaled == pytest.approx(iou(ba, bb), rel=1e-9, abs=1e-9)

    def test_matrix_agrees_with_scalar(self):
        rng = np.random.default_rng(0)
        a = [box(x, y, x + w, y + h) for x, y, w, h in rng.uniform(0.5, 8, (8, 4))]
        b = [box(x, y, x + w, y + h) for x, y, w, h in rng.uniform(0.5, 8, (5, 4))]
        mat = iou_matrix(boxes_to_array(a), boxes_to_array(b))
        for i in range(len(a)):
            for j in range(len(b)):
                assert mat[i, j] == pytest.approx(iou(a[i], b[j]), abs=1e-12)


class TestSegmentIntersection:
    def test_symmetric_cross(self):
        p = segment_intersection(Point2(0, 0), Point2(2, 2), Point2(0, 2), Point2(2, 0))
        assert (p.x, p.y) == (1.0, 1.0)

    def test_parallel_offset(self):
        assert (
            segment_intersection(Point2(0, 0), Point2(1, 0), Point2(0, 1), Point2(1, 1))
            is None
        )

    def test_collinear_overlap_midpoint(self):
        p = segment_intersection(Point2(0, 0), Point2(4, 0), Point2(2, 0), Point2(8, 0))
        assert (p.x, p.y) == (3.0, 0.0)

    def test_collinear_disjoint(self):
        assert (
            segment_intersection(Point2(0, 0), Point2(1, 0), Point2(2, 0), Point2(3, 0))
            is None
        )

    def test_collinear_touching_is_the_touch_point(self):
        p = segment_intersection(Point2(0, 0), Point2(1, 0), Point2(1, 0), Point2(3, 0))
        assert (p.x, p.y) == (1.0, 0.0)

    def test_degenerate_segment_rejected(self):
        with pytest.raises(ValueError, match="zero-length"):
            segment_intersection(Point2(1, 1), Point2(1, 1), Point2(0, 0), Point2(1, 0))

    def test_swap_symmetry(self):
        a = segment_intersection(Point2(0, 0), Point2(3, 1), Point2(0, 1), Point2(3, 0))
        b = segment_intersection(Point2(0, 1), Point2(3, 0), Point2(0, 0), Point2(3, 1))
        assert a.x == pytest.approx(b.x) and a.y == pytest.approx(b.y)

    def test_random_segments_match_parametric_oracle(self):
        rng = np.random.default_rng(42)
        n_checked = 0
        for _ in range(10_000):
            coords = rng.uniform(-50, 50, 8)
            p1, p2 = Point2(coords[0], coords[1]), Point2(coords[2], coords[3])
            q1, q2 = Point2(coords[4], coords[5]), Point2(coords[6], coords[7])
            expected = parametric_oracle(p1, p2, q1, q2)
            if expected == "degenerate":
                continue
            got = segment_intersection(p1, p2, q1, q2)
            n_checked += 1
            if expected is None:
                assert got is None
            else:
                assert got is not None
                assert got.x == pytest.approx(expected.x, abs=1e-9)
                assert got.y == pytest.approx(expected.y, abs=1e-9)
        assert n_checked > 9_900


class TestTipRatio:
    def test_halfway_cross(self):
        r = tip_ratio(Point2(0, 0), Point2(2, 0), Point2(1, 1), Point2(1, -1))
        assert r == pytest.approx(0.5)

    def test_intersection_at_first_endpoint(self):
        r = tip_ratio(Point2(0, 0), Point2(2, 0), Point2(0, 1), Point2(0, -1))
        assert r == pytest.approx(1.0)

    def test_no_intersection_is_none(self):
        assert tip_ratio(Point2(0, 0), Point2(2, 0), Point2(5, 1), Point2(5, 2)) is None

    def test_coincident_fins_rejected(self):
        with pytest.raises(ValueError, match="coincide"):
            tip_ratio(Point2(1, 1), Point2(1, 1), Point2(0, 0), Point2(2, 2))

    def test_random_layouts_match_oracle(self):
        rng = np.random.default_rng(7)
        checked = 0
        for _ in range(2_000):
            c = rng.uniform(-20, 20, 8)
            anf, apf = Point2(c[0], c[1]), Point2(c[2], c[3])
            tf, body = Point2(c[4], c[5]), Point2(c[6], c[7])
            expected = parametric_oracle(anf, apf, tf, body)
            if expected == "degenerate":
                continue
            got = tip_ratio(anf, apf, tf, body)
            if expected is None:
                assert got is None
                continue
            checked += 1
            num = np.hypot(expected.x - apf.x, expected.y - apf.y)
            den = np.hypot(anf.x - apf.x, anf.y - apf.y)
            assert got == pytest.approx(min(1.0, num / den), abs=1e-9)
            assert 0.0 <= got <= 1.0
        assert checked > 100
