import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from poleinspect.errors import FrameMismatch, InvalidBox, InvalidParams
from poleinspect.geometry import (
    GLOBAL,
    BoundingBox,
    Direction,
    Frame,
    ImageExtent,
    clip_box,
    iou,
    transform_box,
)


def pixel_iou(a, b, size=64):
    """Rasterise both integer boxes and count pixels."""
    ma = np.zeros((size, size), bool)
    mb = np.zeros((size, size), bool)
    ma[int(a.y_min):int(a.y_max), int(a.x_min):int(a.x_max)] = True
    mb[int(b.y_min):int(b.y_max), int(b.x_min):int(b.x_max)] = True
    union = (ma | mb).sum()
    return (ma & mb).sum() / union if union else 0.0, union


@st.composite
def int_boxes(draw, hi=64):
    x0 = draw(st.integers(0, hi))
    y0 = draw(st.integers(0, hi))
    x1 = draw(st.integers(x0, hi))
    y1 = draw(st.integers(y0, hi))
    return BoundingBox(x0, y0, x1, y1)


# dyadic coordinates (multiples of 1/1024) translate without rounding
grid = st.integers(-4096 * 1024, 8192 * 1024).map(lambda v: v / 1024)


@st.composite
def grid_boxes(draw, frame=GLOBAL):
    x0, x1 = sorted((draw(grid), draw(grid)))
    y0, y1 = sorted((draw(grid), draw(grid)))
    return BoundingBox(x0, y0, x1, y1, frame)


@st.composite
def crops(draw):
    x0 = draw(st.integers(-2000, 5000))
    y0 = draw(st.integers(-2000, 5000))
    return BoundingBox(x0, y0, x0 + draw(st.integers(0, 3000)), y0 + draw(st.integers(0, 3000)))


def test_iou_identity_and_disjoint():
    a = BoundingBox(3, 4, 20, 30)
    assert iou(a, a) == 1.0
    assert iou(BoundingBox(0, 0, 10, 10), BoundingBox(20, 20, 30, 30)) == 0.0


def test_iou_half_overlap_matches_pixel_count():
    a, b = BoundingBox(0, 0, 10, 10), BoundingBox(5, 0, 15, 10)
    expected, _ = pixel_iou(a, b)
    assert expected == pytest.approx(50 / 150)
    assert iou(a, b) == pytest.approx(expected, abs=1e-15)


def test_iou_zero_union_is_zero():
    p = BoundingBox(5, 5, 5, 5)
    assert iou(p, p) == 0.0


def test_iou_rejects_mixed_frames():
    with pytest.raises(FrameMismatch):
        iou(BoundingBox(0, 0, 1, 1), BoundingBox(0, 0, 1, 1, Frame.crop(2, 2)))


@given(int_boxes(), int_boxes())
def test_iou_pixel_oracle_symmetric_bounded(a, b):
    expected, union = pixel_iou(a, b)
    got = iou(a, b)
    assert got == iou(b, a)
    assert 0.0 <= got <= 1.0
    if union:
        assert abs(got - expected) <= 1.0 / union


@given(int_boxes(), int_boxes())
def test_iou_is_one_only_for_identical_boxes(a, b):
    if iou(a, b) == 1.0:
        assert a == b and a.area > 0


@pytest.mark.parametrize("coords", [(1, 0, 0, 1), (0, 1, 1, 0), (0, 0, math.inf, 1), (math.nan, 0, 1, 1)])
def test_invalid_boxes_rejected(coords):
    with pytest.raises(InvalidBox):
        BoundingBox(*coords)


def test_zero_area_box_allowed():
    assert BoundingBox(2, 2, 2, 5).area == 0


@pytest.mark.parametrize("w,h", [(0, 5), (5, 0), (2.5, 3)])
def test_extent_validation(w, h):
    with pytest.raises(InvalidParams):
        ImageExtent(w, h)


@pytest.mark.parametrize(
    "box,expected",
    [
        ((-5, -5, 10, 10), (0, 0, 10, 10)),
        ((0, 0, 50, 50), (0, 0, 50, 50)),
        ((90, 90, 200, 300), (90, 90, 100, 100)),
    ],
)
def test_clip_box_examples(box, expected):
    assert clip_box(BoundingBox(*box), ImageExtent(100, 100)).as_tuple() == expected


@given(grid_boxes())
def test_clip_box_idempotent_and_keeps_frame(b):
    ext = ImageExtent(1024, 1536)
    once = clip_box(b, ext)
    assert clip_box(once, ext) == once
    assert once.frame == b.frame


def test_transform_examples():
    crop = BoundingBox(100, 200, 400, 800)
    local = transform_box(BoundingBox(100, 200, 110, 210), crop, Direction.TO_LOCAL)
    assert local.as_tuple() == (0, 0, 10, 10)
    assert local.frame == Frame.crop(100, 200)
    assert repr(local.frame).startswith("CROP(100,200)")

    c = BoundingBox(50, 60, 150, 160)
    g = transform_box(BoundingBox(3, 4, 8, 9, Frame.crop(50, 60)), c, Direction.TO_GLOBAL)
    assert g.as_tuple() == (53, 64, 58, 69)
    assert g.frame == GLOBAL


def test_transform_frame_checks():
    crop = BoundingBox(10, 10, 20, 20)
    with pytest.raises(FrameMismatch):
        transform_box(BoundingBox(0, 0, 1, 1, Frame.crop(3, 3)), crop, Direction.TO_LOCAL)
    with pytest.raises(FrameMismatch):
        transform_box(BoundingBox(0, 0, 1, 1), crop, Direction.TO_GLOBAL)
    # a local box of a different crop is not interchangeable
    with pytest.raises(FrameMismatch):
        transform_box(BoundingBox(0, 0, 1, 1, Frame.crop(11, 10)), crop, Direction.TO_GLOBAL)


def test_nested_crops_map_back_through_both_levels():
    crop = BoundingBox(100, 200, 300, 600)
    half = BoundingBox(0, 0, 200, 200, crop.local_frame())
    box = BoundingBox(120.5, 230.25, 131, 240)
    inner = transform_box(transform_box(box, crop, Direction.TO_LOCAL), half, Direction.TO_LOCAL)
    assert inner.frame.parent == crop.local_frame()
    back = transform_box(transform_box(inner, half, Direction.TO_GLOBAL), crop, Direction.TO_GLOBAL)
    assert back == box


@given(grid_boxes(), crops())
def test_round_trip_local_then_global_is_exact(b, crop):
    local = transform_box(b, crop, Direction.TO_LOCAL)
    assert transform_box(local, crop, Direction.TO_GLOBAL) == b


@given(crops(), st.data())
def test_round_trip_global_then_local_is_exact(crop, data):
    b = data.draw(grid_boxes(crop.local_frame()))
    g = transform_box(b, crop, Direction.TO_GLOBAL)
    assert transform_box(g, crop, Direction.TO_LOCAL) == b
