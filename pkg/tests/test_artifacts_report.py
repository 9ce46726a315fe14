import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from poleinspect import artifacts
from poleinspect.corpus import ImbalanceConfig, generate_corpus
from poleinspect.errors import ChecksumError, FormatVersionError
from poleinspect.imbalance import ClassifierModel
from poleinspect.metrics import COCO_IOU_THRESHOLDS, EvaluationReport, ReportSection, classification_section
from poleinspect.report import ReportFormat, emit_report, read_report_csv, report_text, roc_sidecar_path
from poleinspect.store import load_artifact, save_artifact

from conftest import SMALL_SCENE


def test_artifact_round_trip_is_byte_exact():
    payload = {"b": [0.1, 1e-300, -2.5], "a": {"z": 1, "y": None}}
    data = artifacts.dumps("thing", payload)
    kind, back = artifacts.loads(data, "thing")
    assert kind == "thing" and back == payload
    assert artifacts.dumps(kind, back) == data


def test_artifact_digest_known_value():
    # the digest depends only on content: pinned so any platform can compare
    data = artifacts.dumps("thing", {"x": 1.5})
    assert data == (b'{"format":"poleinspect-artifact","kind":"thing","sha256":"'
                    + artifacts._checksum({"format": "poleinspect-artifact", "kind": "thing", "version": 1},
                                          b'{"x":1.5}').encode()
                    + b'","version":1}\n{"x":1.5}\n')
    assert artifacts.sha256_bytes(b"abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"


def test_artifact_errors():
    data = artifacts.dumps("thing", {"x": 1})
    head, body, _ = data.split(b"\n")
    header = json.loads(head)
    with pytest.raises(FormatVersionError):
        artifacts.loads(data, "other")
    header["version"] = 2
    with pytest.raises(FormatVersionError):
        artifacts.loads(json.dumps(header).encode() + b"\n" + body + b"\n")
    with pytest.raises(ChecksumError):
        artifacts.loads(head + b"\n" + body.replace(b"1", b"2") + b"\n")
    with pytest.raises(ChecksumError):
        artifacts.loads(b"not json\n{}\n")
    with pytest.raises(ChecksumError):
        artifacts.loads(data + b"extra\n")


@given(st.integers(0, 2**32 - 1))
def test_any_single_byte_change_is_caught(seed):
    data = bytearray(artifacts.dumps("thing", {"w": [0.25, 3.0, -1.0], "n": "abc"}))
    rng = np.random.default_rng(seed)
    i = int(rng.integers(len(data) - 1))
    data[i] = (data[i] + int(rng.integers(1, 256))) % 256
    with pytest.raises((ChecksumError, FormatVersionError)):
        artifacts.loads(bytes(data))


# ---------------------------------------------------------------------------
# reports


def _report():
    r = EvaluationReport("Detection test", metadata={"seed": "3", "corpus_digest": "abc"})
    r.sections["single_stage"] = ReportSection({t: 0.5 * (1 - t) + 1 / 3 for t in COCO_IOU_THRESHOLDS})
    r.sections["cascade"] = ReportSection({t: 0.8 - t / 7 for t in COCO_IOU_THRESHOLDS}, counts={"cascade_miss": 2})
    r.sections["resampling"] = classification_section(
        [0.9, 0.8, 0.3, 0.1, 0.85], [True, True, False, False, False], [0.61, 2 / 3, 0.7])
    return r


def test_csv_round_trip_full_precision(tmp_path):
    r = _report()
    emit_report(r, ReportFormat.CSV, tmp_path / "r.csv")
    back = read_report_csv(tmp_path / "r.csv")
    assert back.title == r.title and back.metadata == r.metadata
    for name, sec in r.sections.items():
        other = back.sections[name]
        assert other.ap_by_iou == sec.ap_by_iou
        assert other.auc == sec.auc and other.auc_history == sec.auc_history
        assert other.counts == sec.counts
        assert other.roc == sec.roc
    text = (tmp_path / "r.csv").read_text()
    assert text.startswith("# title=Detection test\n")
    assert "metric,iou_threshold,value" in text
    assert "cascade.ap,0.50," in text and "cascade.map_coco,n/a," in text


def test_text_summary_labels_both_systems():
    r = EvaluationReport("t")
    r.sections["single_stage"] = ReportSection({0.5: 0.5})
    r.sections["cascade"] = ReportSection({0.5: 0.8})
    text = report_text(r)
    single = next(line for line in text.splitlines() if line.startswith("single_stage"))
    cascade = next(line for line in text.splitlines() if line.startswith("cascade"))
    assert "0.5000" in single and "0.8000" in cascade
    assert "ap50" in text


def test_text_summary_lists_loop_aucs(tmp_path):
    emit_report(_report(), ReportFormat.TEXT, tmp_path / "r.txt")
    text = (tmp_path / "r.txt").read_text()
    assert "1: 0.6100, 2: 0.6667, 3: 0.7000" in text
    assert "cascade_miss=2" in text


def test_roc_sidecar_of_perfect_classifier_has_corner(tmp_path):
    r = EvaluationReport("perfect")
    r.sections["clf"] = classification_section([0.9, 0.8, 0.2], [True, True, False])
    written = emit_report(r, "CSV", tmp_path / "p.csv")
    assert written == [tmp_path / "p.csv", roc_sidecar_path(tmp_path / "p.csv")]
    rows = [line.split(",") for line in written[1].read_text().splitlines()[1:]]
    assert any(float(fpr) == 0.0 and float(tpr) == 1.0 for _, _, fpr, tpr in rows)
    assert rows[0][1] == "inf" and math.isinf(float(rows[0][1]))


# ---------------------------------------------------------------------------
# save/load dispatch


def test_save_load_every_artifact_type(tmp_path):
    model = ClassifierModel(np.array([0.5, -1.25]), 0.125, [{"epochs": 3}])
    d = save_artifact(model, tmp_path / "c.model")
    assert load_artifact(tmp_path / "c.model", d).to_bytes() == model.to_bytes()

    manifest = generate_corpus(ImbalanceConfig(1, 1), SMALL_SCENE, 0, tmp_path / "corpus")
    d = save_artifact(manifest, tmp_path / "m.jsonl")
    back = load_artifact(tmp_path / "m.jsonl", d)
    assert back.entries[0].image_path == "corpus/images/scene-000000.png"
    assert back.digest() != manifest.digest() or back.entries == manifest.entries

    report = _report()
    d = save_artifact(report, tmp_path / "r.csv")
    assert load_artifact(tmp_path / "r.csv", d).sections["cascade"].ap50 == report.sections["cascade"].ap50
    # same content, same digest
    assert save_artifact(report, tmp_path / "r2.csv") == d

    with pytest.raises(ChecksumError):
        load_artifact(tmp_path / "r.csv", "0" * 64)
    with pytest.raises(TypeError):
        save_artifact(object(), tmp_path / "x")


def test_load_artifact_rejects_unknown_files(tmp_path):
    (tmp_path / "x").write_bytes(b"garbage\n")
    with pytest.raises(ChecksumError):
        load_artifact(tmp_path / "x")
    (tmp_path / "y").write_bytes(artifacts.dumps("mystery", {}))
    with pytest.raises(FormatVersionError):
        load_artifact(tmp_path / "y")
