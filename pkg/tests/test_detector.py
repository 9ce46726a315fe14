import json
from dataclasses import replace

import numpy as np
import pytest

from poleinspect.detector.backend import DetectorModel, default_backend, detect, train_detector
from poleinspect.detector.cascade import to_global, to_half_local, zoom_in_detect
from poleinspect.detector.zoom import CascadeConfig
from poleinspect.errors import ChecksumError, EmptyTargetClass, InvalidImage, InvalidParams
from poleinspect.geometry import GLOBAL, Direction, iou, transform_box
from poleinspect.metrics import average_precision


@pytest.fixture(scope="module")
def stage1(small_corpus):
    return train_detector(small_corpus, "whole_pole", seed=3)


@pytest.fixture(scope="module")
def stage2(small_corpus):
    return train_detector(small_corpus, "pole_cap", seed=3, zoom_config=CascadeConfig())


def test_training_is_deterministic(small_corpus, stage1):
    again = train_detector(small_corpus, "whole_pole", seed=3)
    assert again.digest() == stage1.digest()
    assert stage1.metadata["corpus_digest"] == small_corpus.digest()
    assert stage1.metadata["seed"] == 3
    assert stage1.backend_id == "sliding-window"


def test_empty_target_class(small_corpus):
    positives_only = small_corpus.subset(small_corpus.positives())
    with pytest.raises(EmptyTargetClass):
        train_detector(positives_only, "pole_cap")
    with pytest.raises(InvalidParams):
        train_detector(small_corpus, "cross_arm")


def test_blank_image_gives_nothing(stage1, stage2):
    blank = np.full((512, 384), 0.6)
    assert detect(stage1, blank, 0.5) == []
    assert detect(stage2, blank, 0.5) == []


def test_detect_contract(stage1, small_heldout):
    raster = small_heldout.load_image(small_heldout.entries[3]).raster
    dets = detect(stage1, raster, 0.05)
    assert dets
    confs = [x.confidence for x in dets]
    assert confs == sorted(confs, reverse=True) and min(confs) >= 0.05
    for i, a in enumerate(dets):
        assert a.box.frame == GLOBAL and a.class_name == "whole_pole"
        for b in dets[i + 1:]:
            assert iou(a.box, b.box) < stage1.backend.nms_iou
    assert detect(stage1, raster, max(confs) + 1e-9) == []
    assert detect(stage1, raster, 1.0 + 1e-9) == []
    with pytest.raises(InvalidImage):
        detect(stage1, np.zeros((0, 4)))


def test_one_pole_found_per_scene(stage1, small_heldout):
    for entry in small_heldout:
        image = small_heldout.load_image(entry)
        dets = detect(stage1, image.raster, 0.5)
        gt = entry.boxes("whole_pole")[0]
        assert len(dets) == 1
        assert iou(dets[0].box, gt) >= 0.5


def test_pole_detector_ap(stage1, small_heldout):
    dets, gts = [], []
    for entry in small_heldout:
        dets.append(detect(stage1, small_heldout.load_image(entry).raster, 0.05))
        gts.append(entry.boxes("whole_pole"))
    assert average_precision(dets, gts, 0.5) >= 0.9


def test_model_save_load_round_trip(tmp_path, stage1, small_heldout):
    path = tmp_path / "m.model"
    digest = stage1.save(path)
    loaded = DetectorModel.load(path)
    assert loaded.to_bytes() == path.read_bytes() == stage1.to_bytes()
    assert digest == stage1.digest()
    header = json.loads(path.read_bytes().split(b"\n")[0])
    assert header["info"] == {"backend_id": "sliding-window", "corpus_digest": stage1.metadata["corpus_digest"],
                              "seed": 3, "target_class": "whole_pole"}
    raster = small_heldout.load_image(small_heldout.entries[0]).raster
    assert detect(loaded, raster, 0.01) == detect(stage1, raster, 0.01)


def test_model_tamper_detected(tmp_path, stage1):
    path = tmp_path / "m.model"
    stage1.save(path)
    data = bytearray(path.read_bytes())
    pos = data.index(b'"weights":[') + 12
    data[pos] = ord("7") if data[pos] != ord("7") else ord("3")
    path.write_bytes(bytes(data))
    with pytest.raises(ChecksumError):
        DetectorModel.load(path)


def test_cascade_blank_image_is_a_miss(stage1, stage2):
    found, diag = zoom_in_detect(stage1, stage2, np.full((512, 384), 0.6), CascadeConfig())
    assert found == [] and diag.cascade_miss
    assert diag.to_lines() == ['{"event": "CascadeMiss"}']


def test_cascade_rejects_swapped_models(stage1, stage2):
    with pytest.raises(InvalidParams):
        zoom_in_detect(stage2, stage1, np.zeros((64, 64)), CascadeConfig())


def test_cascade_localises_most_caps(stage1, stage2, small_heldout):
    found_caps = n_caps = 0
    for entry in small_heldout:
        gts = entry.boxes("pole_cap")
        if not gts:
            continue
        found, diag = zoom_in_detect(stage1, stage2, small_heldout.load_image(entry).raster, CascadeConfig())
        assert not diag.cascade_miss
        assert all(x.box.frame == GLOBAL and x.class_name == "pole_cap" for x in found)
        n_caps += 1
        found_caps += bool(found) and iou(found[0].box, gts[0]) >= 0.5
    assert found_caps * 2 > n_caps


def test_cascade_coordinates_replay_from_diagnostics(stage1, stage2, small_heldout):
    cfg = replace(CascadeConfig(), stage2_threshold=0.01, top_k=2)
    n_checked = 0
    for entry in small_heldout:
        raster = small_heldout.load_image(entry).raster
        found, diag = zoom_in_detect(stage1, stage2, raster, cfg)
        emitted = {(x.box.as_tuple(), x.confidence) for x in found}
        for trace in diag.regions:
            for raw in trace.raw:
                g = to_global(raw.box, trace)
                manual = transform_box(transform_box(raw.box, trace.half, Direction.TO_GLOBAL),
                                       trace.crop, Direction.TO_GLOBAL)
                assert g == manual and g.frame == GLOBAL
                assert to_half_local(g, trace) == raw.box
                n_checked += 1
            rec = json.loads(diag.to_lines()[diag.regions.index(trace)])
            assert rec["half_chosen"] == trace.selection.chosen.value
        # every emitted box came from some recorded raw box
        replayed = {(to_global(r.box, t).as_tuple(), r.confidence) for t in diag.regions for r in t.raw}
        assert emitted <= replayed
    assert n_checked > 0


def test_default_backends_differ_by_target():
    assert default_backend("whole_pole").cells != default_backend("pole_cap").cells
    assert default_backend("pole_cap", input_side=128).input_side == 128
