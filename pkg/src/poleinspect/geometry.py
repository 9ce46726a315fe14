"""Axis-aligned boxes, reference frames and IoU.

Boxes use half-open continuous pixel coordinates, so a box's area is
``(x_max - x_min) * (y_max - y_min)``.  Every box carries the frame it is
expressed in; a crop frame remembers its origin and the frame the crop was
taken from, so nested crops (image -> pole crop -> informative half) map back
to the image unambiguously.

Translations are exact when crop origins are integers and box coordinates lie
on a dyadic grid (detectors emit boxes on a 1/1024 px grid for this reason).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

from .errors import FrameMismatch, InvalidBox, InvalidParams

# Detector output grid; keeps crop translations free of rounding.
COORD_QUANTUM = 1.0 / 1024.0


@dataclass(frozen=True)
class Frame:
    """A coordinate frame: the global image, or a crop of some parent frame."""

    origin_x: float = 0.0
    origin_y: float = 0.0
    parent: Optional["Frame"] = None

    @property
    def is_global(self) -> bool:
        return self.parent is None

    @classmethod
    def crop(cls, origin_x: float, origin_y: float, parent: "Frame | None" = None) -> "Frame":
        return cls(float(origin_x), float(origin_y), GLOBAL if parent is None else parent)

    def __repr__(self) -> str:
        if self.is_global:
            return "GLOBAL"
        return f"CROP({self.origin_x:g},{self.origin_y:g})<{self.parent!r}"


GLOBAL = Frame()


class Direction(enum.Enum):
    TO_LOCAL = "to_local"
    TO_GLOBAL = "to_global"


@dataclass(frozen=True)
class ImageExtent:
    width: int
    height: int

    def __post_init__(self):
        if int(self.width) != self.width or int(self.height) != self.height:
            raise InvalidParams(f"extent must be integral, got {self.width}x{self.height}")
        if self.width < 1 or self.height < 1:
            raise InvalidParams(f"extent must be at least 1x1, got {self.width}x{self.height}")

    @property
    def area(self) -> int:
        return self.width * self.height

    @classmethod
    def of(cls, raster) -> "ImageExtent":
        h, w = raster.shape[:2]
        return cls(int(w), int(h))


@dataclass(frozen=True)
class BoundingBox:
    x_min: float
    y_min: float
    x_max: float
    y_max: float
    frame: Frame = GLOBAL

    def __post_init__(self):
        coords = (self.x_min, self.y_min, self.x_max, self.y_max)
        if not all(math.isfinite(c) for c in coords):
            raise InvalidBox(f"non-finite box coordinates {coords}")
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise InvalidBox(f"negative box extent {coords}")
        for name, value in zip(("x_min", "y_min", "x_max", "y_max"), coords):
            object.__setattr__(self, name, float(value))

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return (self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)

    def pad(self, dx: float, dy: float) -> "BoundingBox":
        return BoundingBox(self.x_min - dx, self.y_min - dy, self.x_max + dx, self.y_max + dy, self.frame)

    def to_pixel_bounds(self) -> "BoundingBox":
        """Smallest integer-aligned box containing this one."""
        return BoundingBox(
            math.floor(self.x_min), math.floor(self.y_min),
            math.ceil(self.x_max), math.ceil(self.y_max), self.frame,
        )

    def local_frame(self) -> Frame:
        """The frame of a raster cropped out at this box."""
        return Frame.crop(self.x_min, self.y_min, self.frame)


def iou(a: BoundingBox, b: BoundingBox) -> float:
    if a.frame != b.frame:
        raise FrameMismatch(f"iou across frames {a.frame!r} and {b.frame!r}")
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    inter = max(iw, 0.0) * max(ih, 0.0)
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return min(max(inter / union, 0.0), 1.0)


def clip_box(b: BoundingBox, extent: ImageExtent) -> BoundingBox:
    def clamp(v, hi):
        return min(max(v, 0.0), float(hi))

    return BoundingBox(
        clamp(b.x_min, extent.width), clamp(b.y_min, extent.height),
        clamp(b.x_max, extent.width), clamp(b.y_max, extent.height), b.frame,
    )


def transform_box(b: BoundingBox, crop: BoundingBox, direction: Direction) -> BoundingBox:
    """Move ``b`` between the frame ``crop`` lives in and the crop's local frame."""
    local = crop.local_frame()
    if direction is Direction.TO_LOCAL:
        if b.frame != crop.frame:
            raise FrameMismatch(f"TO_LOCAL needs box in {crop.frame!r}, got {b.frame!r}")
        dx, dy, frame = -crop.x_min, -crop.y_min, local
    elif direction is Direction.TO_GLOBAL:
        if b.frame != local:
            raise FrameMismatch(f"TO_GLOBAL needs box in {local!r}, got {b.frame!r}")
        dx, dy, frame = crop.x_min, crop.y_min, crop.frame
    else:
        raise ValueError(f"unknown direction {direction!r}")
    return BoundingBox(b.x_min + dx, b.y_min + dy, b.x_max + dx, b.y_max + dy, frame)


def quantize(v: float) -> float:
    return round(v / COORD_QUANTUM) * COORD_QUANTUM
