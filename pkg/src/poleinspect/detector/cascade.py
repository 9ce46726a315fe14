"""Two-stage zoom-in detection: find the pole, zoom into its informative half, find the cap."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from ..errors import FrameMismatch, InvalidParams
from ..geometry import GLOBAL, BoundingBox, Direction, ImageExtent, transform_box
from .backend import DetectorModel, as_raster, detect
from .halves import HalfSelection
from .nms import Detection, nms
from .zoom import CascadeConfig, zoom


@dataclass(frozen=True)
class RegionTrace:
    """Bookkeeping for one stage-1 region: enough to replay every coordinate mapping."""

    stage1: Detection
    crop: BoundingBox  # GLOBAL
    selection: HalfSelection
    half: BoundingBox  # crop-local
    raw: tuple[Detection, ...]  # stage-2 output, half-local


@dataclass
class CascadeDiagnostics:
    regions: list[RegionTrace] = field(default_factory=list)
    cascade_miss: bool = False

    def to_records(self) -> list[dict]:
        if self.cascade_miss:
            return [{"event": "CascadeMiss"}]
        out = []
        for r in self.regions:
            out.append({
                "crop": list(r.crop.as_tuple()),
                "event": "region",
                "half": list(r.half.as_tuple()),
                "half_chosen": r.selection.chosen.value,
                "half_criterion": r.selection.criterion.value,
                "lower_score": r.selection.lower_score,
                "stage1_box": list(r.stage1.box.as_tuple()),
                "stage1_confidence": r.stage1.confidence,
                "stage2_raw": [[*d.box.as_tuple(), d.confidence] for d in r.raw],
                "upper_score": r.selection.upper_score,
            })
        return out

    def to_lines(self) -> list[str]:
        return [json.dumps(r, sort_keys=True) for r in self.to_records()]


def to_global(local: BoundingBox, trace: RegionTrace) -> BoundingBox:
    return transform_box(transform_box(local, trace.half, Direction.TO_GLOBAL), trace.crop, Direction.TO_GLOBAL)


def to_half_local(box: BoundingBox, trace: RegionTrace) -> BoundingBox:
    return transform_box(transform_box(box, trace.crop, Direction.TO_LOCAL), trace.half, Direction.TO_LOCAL)


def zoom_in_detect(
    stage1: DetectorModel, stage2: DetectorModel, image, config: CascadeConfig = CascadeConfig()
) -> tuple[list[Detection], CascadeDiagnostics]:
    """Run the cascade; detections are pole_cap boxes in GLOBAL coordinates."""
    if stage1.target_class != "whole_pole" or stage2.target_class != "pole_cap":
        raise InvalidParams("cascade needs a whole_pole stage-1 and a pole_cap stage-2 model")
    raster = as_raster(image)
    diag = CascadeDiagnostics()
    poles = detect(stage1, raster, config.stage1_threshold, GLOBAL)[: max(1, config.top_k)]
    if not poles:
        diag.cascade_miss = True
        return [], diag
    found: list[Detection] = []
    extent = ImageExtent.of(raster)
    for pole in poles:
        crop, selection, half, half_raster = zoom(raster, pole.box, config)
        if half_raster.shape[0] < 2 or half_raster.shape[1] < 2:
            continue
        raw = detect(stage2, half_raster, config.stage2_threshold, half.local_frame())
        trace = RegionTrace(pole, crop, selection, half, tuple(raw))
        diag.regions.append(trace)
        for d in raw:
            g = to_global(d.box, trace)
            if g.frame != GLOBAL or g.x_max > extent.width or g.y_max > extent.height:
                raise FrameMismatch(f"cascade produced {g!r} outside the global image")
            found.append(Detection(g, d.class_name, d.confidence))
    if len(poles) > 1:
        found = nms(found, config.nms_iou)
    else:
        found.sort(key=lambda d: (-d.confidence, d.box.x_min, d.box.y_min))
    return found, diag
