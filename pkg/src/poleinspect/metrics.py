"""Detection AP (COCO-style greedy matching) and ROC/AUC for binary scorers."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .errors import UndefinedMetric
from .geometry import BoundingBox, iou

COCO_IOU_THRESHOLDS = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))


@dataclass(frozen=True)
class PRPoint:
    precision: float
    recall: float
    confidence_threshold: float


@dataclass(frozen=True)
class ROCPoint:
    false_positive_rate: float
    true_positive_rate: float
    threshold: float


def _as_bool_labels(labels) -> np.ndarray:
    out = []
    for lab in labels:
        if isinstance(lab, str):
            out.append(lab.upper() == "POSITIVE")
        else:
            out.append(bool(getattr(lab, "is_positive", lab)))
    return np.asarray(out, dtype=bool)


def match_detections(
    detections: Sequence[Any], ground_truth: Sequence[BoundingBox], iou_threshold: float
) -> list[tuple[float, bool]]:
    """Greedy matching for one image: ``(confidence, is_true_positive)`` per detection.

    Detections are visited by descending confidence (stable); each claims the
    unmatched ground-truth box of highest IoU >= threshold, lowest index on ties.
    """
    order = sorted(range(len(detections)), key=lambda i: -detections[i].confidence)
    taken = [False] * len(ground_truth)
    out = []
    for i in order:
        det = detections[i]
        best, best_iou = -1, -1.0
        for j, gt in enumerate(ground_truth):
            if taken[j]:
                continue
            v = iou(det.box, gt)
            if v >= iou_threshold and v > best_iou:
                best, best_iou = j, v
        if best >= 0:
            taken[best] = True
        out.append((float(det.confidence), best >= 0))
    return out


def precision_recall(
    detections: Sequence[Sequence[Any]],
    ground_truth: Sequence[Sequence[BoundingBox]],
    iou_threshold: float,
) -> list[PRPoint]:
    if len(detections) != len(ground_truth):
        raise ValueError("detections and ground_truth must cover the same images")
    n_gt = sum(len(g) for g in ground_truth)
    matched = []
    for dets, gts in zip(detections, ground_truth):
        matched.extend(match_detections(dets, gts, iou_threshold))
    # stable sort keeps image order among equal confidences
    matched.sort(key=lambda m: -m[0])
    points = []
    tp = fp = 0
    for conf, hit in matched:
        tp += hit
        fp += not hit
        points.append(PRPoint(tp / (tp + fp), tp / n_gt if n_gt else 0.0, conf))
    return points


def average_precision(
    detections: Sequence[Sequence[Any]],
    ground_truth: Sequence[Sequence[BoundingBox]],
    iou_threshold: float = 0.5,
) -> float:
    """Area under the monotone-interpolated PR curve over all recall change points."""
    n_gt = sum(len(g) for g in ground_truth)
    n_det = sum(len(d) for d in detections)
    if n_gt == 0:
        if n_det == 0:
            raise UndefinedMetric("AP undefined with no detections and no ground truth")
        return 0.0
    points = precision_recall(detections, ground_truth, iou_threshold)
    if not points:
        return 0.0
    precision = np.array([p.precision for p in points])
    recall = np.array([p.recall for p in points])
    # precision envelope: max precision at any recall >= r
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    ap = 0.0
    prev_recall = 0.0
    for k in range(len(points)):
        if recall[k] > prev_recall:
            ap += (recall[k] - prev_recall) * envelope[k]
            prev_recall = recall[k]
    return float(min(max(ap, 0.0), 1.0))


def ap_by_iou(detections, ground_truth, thresholds: Iterable[float] = COCO_IOU_THRESHOLDS) -> dict[float, float]:
    return {float(t): average_precision(detections, ground_truth, t) for t in thresholds}


def map_coco(detections, ground_truth) -> float:
    values = ap_by_iou(detections, ground_truth)
    return float(sum(values.values()) / len(values))


def roc_curve(scores: Sequence[float], labels: Sequence[Any]) -> list[ROCPoint]:
    """ROC points at every distinct score, highest first, with (0,0) and (1,1) endpoints."""
    s = np.asarray(scores, dtype=float)
    y = _as_bool_labels(labels)
    if s.shape != y.shape:
        raise ValueError(f"scores/labels length mismatch: {s.shape} vs {y.shape}")
    n_pos = int(y.sum())
    n_neg = int(len(y) - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetric("ROC needs both positive and negative labels")
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    tps = np.cumsum(y)
    fps = np.cumsum(~y)
    # last index of each group of equal scores
    last = np.r_[np.nonzero(np.diff(s))[0], len(s) - 1]
    points = [ROCPoint(0.0, 0.0, math.inf)]
    for k in last:
        points.append(ROCPoint(fps[k] / n_neg, tps[k] / n_pos, float(s[k])))
    return points


def auc(scores: Sequence[float], labels: Sequence[Any]) -> float:
    pts = roc_curve(scores, labels)
    area = 0.0
    for a, b in zip(pts, pts[1:]):
        area += (b.false_positive_rate - a.false_positive_rate) * (b.true_positive_rate + a.true_positive_rate) / 2.0
    return float(area)


@dataclass
class ReportSection:
    """Metrics for one evaluated system (a detector variant or a classifier run)."""

    ap_by_iou: dict[float, float] = field(default_factory=dict)
    roc: list[ROCPoint] = field(default_factory=list)
    auc: float | None = None
    auc_history: list[float] = field(default_factory=list)
    counts: dict[str, int] = field(default_factory=dict)

    @property
    def ap50(self) -> float | None:
        return self.ap_by_iou.get(0.5)

    @property
    def map_coco(self) -> float | None:
        if not all(t in self.ap_by_iou for t in COCO_IOU_THRESHOLDS):
            return None
        return float(sum(self.ap_by_iou[t] for t in COCO_IOU_THRESHOLDS) / len(COCO_IOU_THRESHOLDS))


@dataclass
class EvaluationReport:
    title: str
    sections: dict[str, ReportSection] = field(default_factory=dict)
    metadata: dict[str, str] = field(default_factory=dict)

    def section(self, name: str) -> ReportSection:
        return self.sections.setdefault(name, ReportSection())


def detection_section(detections, ground_truth) -> ReportSection:
    return ReportSection(ap_by_iou=ap_by_iou(detections, ground_truth))


def classification_section(scores, labels, history: Sequence[float] = ()) -> ReportSection:
    y = _as_bool_labels(labels)
    return ReportSection(
        roc=roc_curve(scores, y),
        auc=auc(scores, y),
        auc_history=list(history),
        counts={"n_positive": int(y.sum()), "n_negative": int((~y).sum())},
    )


def metadata_strings(meta: Mapping[str, Any]) -> dict[str, str]:
    return {str(k): str(v) for k, v in sorted(meta.items())}
