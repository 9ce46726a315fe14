"""Crop bookkeeping shared by cascade inference and stage-2 training."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..geometry import BoundingBox, ImageExtent, clip_box
from .halves import Criterion, Half, HalfSelection, select_informative_half, upper_height


@dataclass(frozen=True)
class CascadeConfig:
    margin_fraction: float = 0.05
    criterion: Criterion = Criterion.ENTROPY
    stage1_threshold: float = 0.05
    stage2_threshold: float = 0.05
    top_k: int = 1
    nms_iou: float = 0.3

    def to_dict(self) -> dict:
        return {
            "margin_fraction": self.margin_fraction,
            "criterion": Criterion(self.criterion).value,
            "stage1_threshold": self.stage1_threshold,
            "stage2_threshold": self.stage2_threshold,
            "top_k": self.top_k,
            "nms_iou": self.nms_iou,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CascadeConfig":
        d = dict(d)
        if "criterion" in d:
            d["criterion"] = Criterion(d["criterion"])
        return cls(**d)


def crop_box_for(region: BoundingBox, extent: ImageExtent, margin_fraction: float) -> BoundingBox:
    """Pad ``region`` by a fraction of its size, clip to the image, snap to whole pixels."""
    padded = region.pad(margin_fraction * region.width, margin_fraction * region.height)
    return clip_box(clip_box(padded, extent).to_pixel_bounds(), extent)


def half_region(crop: BoundingBox, chosen: Half) -> BoundingBox:
    """The chosen half of ``crop``, expressed in the crop's local frame."""
    w = crop.width
    h = int(round(crop.height))
    top = upper_height(h)
    if chosen is Half.UPPER:
        return BoundingBox(0, 0, w, top, crop.local_frame())
    return BoundingBox(0, top, w, h, crop.local_frame())


def cut(raster: np.ndarray, box: BoundingBox) -> np.ndarray:
    x0, y0 = int(box.x_min), int(box.y_min)
    x1, y1 = int(math.ceil(box.x_max)), int(math.ceil(box.y_max))
    return raster[y0:y1, x0:x1]


def zoom(
    raster: np.ndarray, region: BoundingBox, config: CascadeConfig
) -> tuple[BoundingBox, HalfSelection, BoundingBox, np.ndarray]:
    """Crop ``region`` with margin and pick its informative half.

    Returns ``(crop, selection, half, half_raster)`` where ``crop`` is in the
    region's frame and ``half`` in the crop's local frame.
    """
    crop = crop_box_for(region, ImageExtent.of(raster), config.margin_fraction)
    crop_raster = cut(raster, crop)
    selection = select_informative_half(crop_raster, config.criterion)
    half = half_region(crop, selection.chosen)
    return crop, selection, half, cut(crop_raster, half)
