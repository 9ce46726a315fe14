import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from poleinspect.corpus import SceneParams, generate_scene
from poleinspect.detector.halves import (
    Criterion,
    Half,
    edge_density,
    select_informative_half,
    shannon_entropy,
    split_halves,
)
from poleinspect.detector.nms import Detection, nms
from poleinspect.detector.zoom import CascadeConfig, crop_box_for, half_region, zoom
from poleinspect.errors import CropTooSmall, FrameMismatch, InvalidBox, InvalidImage
from poleinspect.geometry import BoundingBox, Frame, ImageExtent, iou

BOTH = (Criterion.ENTROPY, Criterion.EDGE_DENSITY)


# ---------------------------------------------------------------------------
# half selection


@pytest.mark.parametrize("criterion", BOTH)
def test_identical_halves_tie_goes_upper(criterion):
    rng = np.random.default_rng(0)
    half = rng.random((10, 12))
    sel = select_informative_half(np.vstack([half, half]), criterion)
    assert sel.chosen is Half.UPPER
    assert sel.upper_score == sel.lower_score
    assert sel.criterion is criterion


@pytest.mark.parametrize("criterion", BOTH)
def test_noisy_upper_uniform_lower(criterion):
    rng = np.random.default_rng(1)
    crop = np.vstack([rng.random((8, 20)), np.full((8, 20), 0.4)])
    sel = select_informative_half(crop, criterion)
    assert sel.chosen is Half.UPPER
    assert sel.upper_score > 0
    if criterion is Criterion.ENTROPY:
        assert sel.lower_score == 0.0


@pytest.mark.parametrize("criterion", BOTH)
def test_busier_lower_half_wins(criterion):
    rng = np.random.default_rng(2)
    crop = np.vstack([np.full((8, 20), 0.4), rng.random((8, 20))])
    assert select_informative_half(crop, criterion).chosen is Half.LOWER


def test_odd_height_upper_gets_extra_row():
    up, low = split_halves(np.zeros((7, 3)))
    assert (up.shape[0], low.shape[0]) == (4, 3)


def test_entropy_values():
    assert shannon_entropy(np.full((4, 4), 0.3)) == 0.0
    two = np.array([[0.0, 1.0], [0.0, 1.0]])
    assert shannon_entropy(two) == pytest.approx(1.0)
    assert shannon_entropy(np.arange(256).reshape(16, 16) / 255) == pytest.approx(8.0)


def test_edge_density_counts_strong_gradients():
    step = np.zeros((4, 6))
    step[:, 3:] = 1.0
    # central differences give 0.5 at columns 2 and 3
    assert edge_density(step) == pytest.approx(2 / 6)
    assert edge_density(step * 0.1) == 0.0


def test_half_selection_errors():
    with pytest.raises(CropTooSmall):
        select_informative_half(np.zeros((1, 5)))
    with pytest.raises(InvalidImage):
        select_informative_half(np.zeros((0, 5)))
    with pytest.raises(InvalidImage):
        select_informative_half(np.zeros((4, 4, 3)))


@pytest.mark.parametrize("criterion", BOTH)
def test_generated_pole_crop_picks_upper(criterion):
    scene = generate_scene(SceneParams(), 7)
    b = scene.boxes("whole_pole")[0].to_pixel_bounds()
    crop = scene.pixels[int(b.y_min):int(b.y_max), int(b.x_min):int(b.x_max)]
    sel = select_informative_half(crop, criterion)
    assert sel.chosen is Half.UPPER and sel.upper_score > sel.lower_score


@settings(max_examples=200)
@given(st.integers(0, 2**32 - 1), st.integers(2, 30), st.integers(1, 30), st.integers(-60, 60))
def test_entropy_choice_invariant_under_intensity_shift(seed, h, w, m):
    rng = np.random.default_rng(seed)
    levels = rng.integers(60, 196, size=(h, w))
    levels[: h // 2] = np.where(rng.random((h // 2, w)) < 0.5, 128, levels[: h // 2])
    base = select_informative_half(levels / 255.0)
    shifted = select_informative_half((levels + m) / 255.0)
    assert shifted == base
    assert select_informative_half(levels / 255.0) == base  # deterministic


# ---------------------------------------------------------------------------
# NMS


def d(x0, y0, x1, y1, c, frame=None):
    box = BoundingBox(x0, y0, x1, y1) if frame is None else BoundingBox(x0, y0, x1, y1, frame)
    return Detection(box, "pole_cap", c)


def test_nms_examples():
    one = d(0, 0, 5, 5, 0.3)
    assert nms([one], 0.5) == [one]
    a, b = d(0, 0, 10, 10, 0.9), d(0, 0, 10, 10, 0.8)
    assert nms([b, a], 0.5) == [a]
    A, B, C = d(0, 0, 10, 10, 0.9), d(0, 0, 10, 6, 0.8), d(50, 50, 60, 60, 0.7)
    assert iou(A.box, B.box) == pytest.approx(0.6)
    assert nms([C, B, A], 0.5) == [A, C]


def test_nms_tie_break_and_errors():
    left, right = d(0, 0, 10, 10, 0.5), d(2, 0, 12, 10, 0.5)
    assert nms([right, left], 0.5) == [left]
    assert nms([], 0.5) == []
    with pytest.raises(FrameMismatch):
        nms([d(0, 0, 1, 1, 0.5), d(0, 0, 1, 1, 0.5, Frame.crop(1, 1))], 0.5)
    with pytest.raises(InvalidBox):
        Detection(BoundingBox(0, 0, 1, 1), "pole_cap", 1.5)


dets = st.lists(
    st.tuples(st.integers(0, 30), st.integers(0, 30), st.integers(1, 15), st.integers(1, 15),
              st.integers(0, 20)).map(lambda t: d(t[0], t[1], t[0] + t[2], t[1] + t[3], t[4] / 20)),
    max_size=12,
)


@settings(max_examples=300)
@given(dets, st.sampled_from([0.1, 0.3, 0.5, 0.7]))
def test_nms_greedy_characterisation(detections, thr):
    kept = nms(detections, thr)
    ids = {id(x) for x in detections}
    assert all(id(k) in ids for k in kept)
    for i, a in enumerate(kept):
        for b in kept[i + 1:]:
            assert iou(a.box, b.box) < thr
    order = sorted(detections, key=lambda x: (-x.confidence, x.box.x_min, x.box.y_min))
    rank = {id(x): i for i, x in enumerate(order)}
    kept_ids = {id(k) for k in kept}
    assert [rank[id(k)] for k in kept] == sorted(rank[id(k)] for k in kept)
    # every dropped detection is covered by a kept one that came earlier
    for x in detections:
        if id(x) not in kept_ids:
            assert any(iou(x.box, k.box) >= thr and rank[id(k)] < rank[id(x)] for k in kept)


# ---------------------------------------------------------------------------
# crop bookkeeping


def test_crop_box_padding_clipping_and_snapping():
    ext = ImageExtent(100, 200)
    crop = crop_box_for(BoundingBox(10.3, 20.2, 30.1, 120.0), ext, 0.05)
    # 5% of 19.8 x 99.8 on every side, then outward to whole pixels
    assert crop.as_tuple() == (9, 15, 32, 125)
    edge = crop_box_for(BoundingBox(0, 0, 100, 200), ext, 0.05)
    assert edge.as_tuple() == (0, 0, 100, 200)


def test_half_region_in_local_frame():
    crop = BoundingBox(10, 20, 40, 81)
    up = half_region(crop, Half.UPPER)
    low = half_region(crop, Half.LOWER)
    assert up.as_tuple() == (0, 0, 30, 31) and low.as_tuple() == (0, 31, 30, 61)
    assert up.frame == crop.local_frame() == low.frame


def test_zoom_returns_consistent_pieces():
    scene = generate_scene(SceneParams(), 7)
    raster = scene.pixels.astype(np.float64)
    pole = scene.boxes("whole_pole")[0]
    crop, sel, half, half_raster = zoom(raster, pole, CascadeConfig())
    assert sel.chosen is Half.UPPER
    assert half_raster.shape == (int(half.height), int(half.width))
    assert np.array_equal(half_raster, raster[int(crop.y_min):int(crop.y_min + half.height),
                                              int(crop.x_min):int(crop.x_max)])
