"""Save and load any persisted object by inspecting what it is."""

from __future__ import annotations

import json
from pathlib import Path

from . import artifacts
from .corpus import DatasetManifest
from .detector.backend import MODEL_KIND, DetectorModel
from .errors import ChecksumError, FormatVersionError
from .imbalance import CLASSIFIER_KIND, ClassifierModel
from .metrics import EvaluationReport
from .report import ReportFormat, emit_report, read_report_csv


def save_artifact(obj, path: str | Path) -> str:
    """Persist a model, dataset manifest, or report; returns the file's sha256."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(obj, (DetectorModel, ClassifierModel)):
        obj.save(path)
    elif isinstance(obj, DatasetManifest):
        obj.save(path)
    elif isinstance(obj, EvaluationReport):
        emit_report(obj, ReportFormat.CSV, path)
    else:
        raise TypeError(f"cannot persist {type(obj).__name__}")
    return artifacts.file_digest(path)


def load_artifact(path: str | Path, expected_digest: str | None = None):
    """Load whatever :func:`save_artifact` wrote.

    With ``expected_digest`` (as recorded in a run manifest) the raw bytes are
    checked first, which also covers manifests and reports.
    """
    path = Path(path)
    data = path.read_bytes()
    if expected_digest is not None and artifacts.sha256_bytes(data) != expected_digest:
        raise ChecksumError(f"{path} does not match its recorded digest")
    first = data.split(b"\n", 1)[0]
    if first.startswith(b"# title="):
        return read_report_csv(path)
    try:
        header = json.loads(first)
    except ValueError as exc:
        raise ChecksumError(f"{path}: unreadable header") from exc
    if not isinstance(header, dict):
        raise ChecksumError(f"{path}: malformed header")
    if "generator_version" in header:
        return DatasetManifest.load(path)
    kind, payload = artifacts.loads(data)
    if kind == MODEL_KIND:
        return DetectorModel.from_payload(payload)
    if kind == CLASSIFIER_KIND:
        return ClassifierModel.from_payload(payload)
    raise FormatVersionError(f"{path}: unknown artifact kind {kind!r}")
