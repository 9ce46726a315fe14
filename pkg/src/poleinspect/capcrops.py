"""Cut the cap area out of each scene and turn it into a classifier sample.

Two sources for where the cap area is:

* ``cascade``: the top stage-2 detection of the zoom-in cascade (any
  confidence).  A scene where stage 1 finds no pole yields no sample and is
  reported as a cascade miss; it is never auto-labelled.
* ``annotation``: the apex of the annotated whole-pole box, with a seeded
  jitter standing in for localisation error.  Used for fast classifier
  studies that do not need detectors.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .corpus import DatasetManifest, ManifestEntry
from .detector.backend import DetectorModel, as_raster
from .detector.cascade import zoom_in_detect
from .detector.zoom import CascadeConfig
from .geometry import BoundingBox, ImageExtent, clip_box
from .imbalance import Sample, extract_features

CONTEXT = 3.0


@dataclass
class CropResult:
    samples: list[Sample] = field(default_factory=list)
    cascade_misses: list[str] = field(default_factory=list)


def cap_area(center_x: float, center_y: float, cap_size: int, extent: ImageExtent, context: float = CONTEXT) -> BoundingBox:
    side = context * cap_size
    box = BoundingBox(center_x - side / 2, center_y - side / 2, center_x + side / 2, center_y + side / 2)
    return clip_box(box.to_pixel_bounds(), extent)


def _cut(raster: np.ndarray, box: BoundingBox) -> np.ndarray:
    return raster[int(box.y_min):int(box.y_max), int(box.x_min):int(box.x_max)]


def annotation_samples(
    manifest: DatasetManifest, cap_size: int, seed: int, jitter_px: float = 3.0, entries: Sequence[ManifestEntry] | None = None
) -> list[Sample]:
    out = []
    for idx, entry in enumerate(manifest.entries if entries is None else entries):
        image = manifest.load_image(entry)
        pole = entry.boxes("whole_pole")[0]
        rng = np.random.default_rng([int(seed), idx])
        dx, dy = rng.uniform(-jitter_px, jitter_px, 2)
        cx, _ = pole.center
        box = cap_area(cx + dx, pole.y_min + cap_size / 2 + dy, cap_size, image.extent)
        out.append(Sample(extract_features(_cut(image.raster, box)), entry.condition_label, entry.source_id))
    return out


def cascade_samples(
    manifest: DatasetManifest,
    stage1: DetectorModel,
    stage2: DetectorModel,
    config: CascadeConfig,
    cap_size: int,
) -> CropResult:
    result = CropResult()
    probe = CascadeConfig(config.margin_fraction, config.criterion, config.stage1_threshold, 0.0,
                          config.top_k, config.nms_iou)
    for entry in manifest.entries:
        raster = manifest.load_image(entry).raster
        dets, diag = zoom_in_detect(stage1, stage2, as_raster(raster), probe)
        if diag.cascade_miss or not dets:
            result.cascade_misses.append(entry.source_id)
            continue
        cx, cy = dets[0].box.center
        box = cap_area(cx, cy, cap_size, ImageExtent.of(raster))
        result.samples.append(Sample(extract_features(_cut(raster, box)), entry.condition_label, entry.source_id))
    return result
