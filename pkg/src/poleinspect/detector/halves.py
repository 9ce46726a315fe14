"""Pick the more informative half (upper vs lower) of a whole-pole crop."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from ..errors import CropTooSmall, InvalidImage

EDGE_THRESHOLD = 0.1


class Half(str, enum.Enum):
    UPPER = "UPPER"
    LOWER = "LOWER"


class Criterion(str, enum.Enum):
    ENTROPY = "ENTROPY"
    EDGE_DENSITY = "EDGE_DENSITY"


@dataclass(frozen=True)
class HalfSelection:
    chosen: Half
    upper_score: float
    lower_score: float
    criterion: Criterion


def split_halves(crop: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Split at the midline; with an odd height the upper half gets the extra row."""
    mid = upper_height(crop.shape[0])
    return crop[:mid], crop[mid:]


def upper_height(height: int) -> int:
    return (height + 1) // 2


def shannon_entropy(region: np.ndarray) -> float:
    """Entropy in bits of the 256-level intensity histogram (intensities in [0, 1])."""
    levels = np.clip(np.rint(np.asarray(region, dtype=np.float64) * 255.0), 0, 255).astype(np.int64)
    counts = np.bincount(levels.ravel(), minlength=256)
    p = counts[counts > 0] / levels.size
    return float(-(p * np.log2(p)).sum()) + 0.0


def edge_density(region: np.ndarray, threshold: float = EDGE_THRESHOLD) -> float:
    """Fraction of pixels whose central-difference gradient magnitude exceeds ``threshold``."""
    region = np.asarray(region, dtype=np.float64)
    if region.shape[0] < 2 or region.shape[1] < 2:
        gy = np.gradient(region, axis=0) if region.shape[0] >= 2 else np.zeros_like(region)
        gx = np.gradient(region, axis=1) if region.shape[1] >= 2 else np.zeros_like(region)
    else:
        gy, gx = np.gradient(region)
    return float((np.hypot(gx, gy) > threshold).mean())


def select_informative_half(crop: np.ndarray, criterion: Criterion = Criterion.ENTROPY) -> HalfSelection:
    crop = np.asarray(crop)
    if crop.ndim != 2 or crop.size == 0:
        raise InvalidImage(f"expected a non-empty 2-D raster, got shape {crop.shape}")
    if crop.shape[0] < 2:
        raise CropTooSmall(f"crop height {crop.shape[0]} < 2")
    criterion = Criterion(criterion)
    score = shannon_entropy if criterion is Criterion.ENTROPY else edge_density
    upper, lower = split_halves(crop)
    up, lo = score(upper), score(lower)
    chosen = Half.UPPER if up >= lo else Half.LOWER
    return HalfSelection(chosen, up, lo, criterion)
