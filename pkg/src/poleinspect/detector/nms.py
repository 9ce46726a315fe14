from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from ..errors import FrameMismatch, InvalidBox
from ..geometry import BoundingBox, iou


@dataclass(frozen=True)
class Detection:
    box: BoundingBox
    class_name: str
    confidence: float

    def __post_init__(self):
        c = float(self.confidence)
        if not (0.0 <= c <= 1.0):
            raise InvalidBox(f"confidence {self.confidence} outside [0, 1]")
        object.__setattr__(self, "confidence", c)


def detection_order_key(d: Detection):
    return (-d.confidence, d.box.x_min, d.box.y_min)


def nms(detections: Sequence[Detection], iou_threshold: float) -> list[Detection]:
    """Greedy non-maximum suppression.

    Visits detections by (confidence desc, x_min asc, y_min asc) and drops any
    whose IoU with an already kept detection is >= ``iou_threshold``.
    """
    if not detections:
        return []
    frame = detections[0].box.frame
    if any(d.box.frame != frame for d in detections):
        raise FrameMismatch("nms over detections from different frames")
    kept: list[Detection] = []
    for d in sorted(detections, key=detection_order_key):
        if all(iou(d.box, k.box) < iou_threshold for k in kept):
            kept.append(d)
    return kept
