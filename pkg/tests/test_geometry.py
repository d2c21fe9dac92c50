import pytest
from hypothesis import given
from hypothesis import strategies as st

from threattrack.geometry import BBox, containment_ratio, intersection_area, iou


def grid_count_iou(a: BBox, b: BBox, step=1.0):
    """Independent oracle: count unit grid cells by center membership."""
    xs = min(a.x, b.x), max(a.x2, b.x2)
    ys = min(a.y, b.y), max(a.y2, b.y2)
    inter = union = 0
    x = xs[0] + step / 2
    while x < xs[1]:
        y = ys[0] + step / 2
        while y < ys[1]:
            in_a = a.x <= x <= a.x2 and a.y <= y <= a.y2
            in_b = b.x <= x <= b.x2 and b.y <= y <= b.y2
            inter += in_a and in_b
            union += in_a or in_b
            y += step
        x += step
    return inter / union


def test_identical_boxes():
    a = BBox(0, 0, 10, 10)
    assert iou(a, a) == 1.0


def test_disjoint_boxes():
    assert iou(BBox(0, 0, 10, 10), BBox(20, 20, 5, 5)) == 0.0


def test_partial_overlap_matches_grid_count():
    a, b = BBox(0, 0, 10, 10), BBox(5, 0, 10, 10)
    assert iou(a, b) == pytest.approx(50 / 150, abs=1e-12)
    assert iou(a, b) == pytest.approx(grid_count_iou(a, b), abs=1e-12)


def test_degenerate_boxes_give_zero():
    assert iou(BBox(0, 0, 0, 0), BBox(0, 0, 0, 0)) == 0.0
    assert iou(BBox(0, 0, 0, 10), BBox(0, 0, 10, 10)) == 0.0


def test_negative_sides_rejected():
    with pytest.raises(ValueError):
        BBox(0, 0, -1, 5)


def test_containment_full_and_disjoint():
    inner = BBox(2, 2, 3, 3)
    outer = BBox(0, 0, 10, 10)
    assert containment_ratio(inner, outer) == 1.0
    assert containment_ratio(BBox(50, 50, 3, 3), outer) == 0.0


def test_containment_half():
    assert containment_ratio(BBox(0, 0, 4, 4), BBox(2, 0, 10, 10)) == pytest.approx(0.5)


def test_containment_zero_area_inner():
    assert containment_ratio(BBox(0, 0, 0, 0), BBox(0, 0, 10, 10)) == 0.0


boxes = st.builds(
    BBox,
    st.floats(-500, 500),
    st.floats(-500, 500),
    st.floats(0, 300),
    st.floats(0, 300),
)


@given(boxes, boxes)
def test_iou_symmetric(a, b):
    assert iou(a, b) == pytest.approx(iou(b, a), abs=1e-12)


@given(boxes)
def test_self_iou_is_one_for_positive_area(a):
    if a.area > 0:
        assert iou(a, a) == 1.0


@given(boxes, boxes, st.floats(-100, 100), st.floats(-100, 100))
def test_translation_invariance(a, b, dx, dy):
    assert iou(a.translated(dx, dy), b.translated(dx, dy)) == pytest.approx(
        iou(a, b), abs=1e-9
    )


@given(boxes, boxes)
def test_containment_dominates_iou(a, b):
    if a.area > 0:
        assert containment_ratio(a, b) >= iou(a, b) - 1e-12


@given(boxes, boxes)
def test_intersection_bounded(a, b):
    inter = intersection_area(a, b)
    assert 0.0 <= inter <= min(a.area, b.area) + 1e-9
