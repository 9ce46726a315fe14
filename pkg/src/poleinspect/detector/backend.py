"""Reference detector backend: multi-scale sliding windows scored by a linear model.

The input raster is first resized so its longer side equals
``BackendSpec.input_side``, the way a CNN detector resizes its input.  This
is what makes tiny objects hard for a single detector over the full image and
what the zoom-in cascade works around.

Each window's feature vector is built on a ``cells`` grid laid over the
window enlarged by ``context``: per-cell mean intensity (relative to the
region mean) and per-cell mean gradient magnitude split into orientation
bins.  Cell sums come from integral images, and dense scoring folds the
linear model into per-cell weights so no feature matrix is materialised at
inference time.
"""

from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Iterator

import numpy as np
from PIL import Image
from scipy.optimize import minimize
from scipy.special import expit

from .. import artifacts
from ..corpus import DatasetManifest
from ..errors import EmptyTargetClass, InvalidImage, InvalidParams
from ..geometry import GLOBAL, BoundingBox, Direction, Frame, quantize, transform_box
from .nms import Detection
from .zoom import CascadeConfig, zoom

log = logging.getLogger(__name__)

TARGET_CLASSES = ("whole_pole", "pole_cap")
MODEL_KIND = "detector-model"


@dataclass(frozen=True)
class BackendSpec:
    backend_id: str = "sliding-window"
    input_side: int = 256
    cells: tuple[int, int] = (4, 4)
    context: float = 2.0
    n_sizes: int = 3
    stride_fraction: float = 0.125
    n_orientations: int = 6
    positive_iou: float = 0.6
    negative_iou: float = 0.3
    negatives_per_image: int = 40
    mining_rounds: int = 2
    mined_per_image: int = 10
    l2: float = 1e-2
    nms_iou: float = 0.3
    max_candidates: int = 2000
    max_detections: int = 20
    jitter_crops: int = 1

    def to_dict(self) -> dict:
        d = asdict(self)
        d["cells"] = list(self.cells)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "BackendSpec":
        d = dict(d)
        if "cells" in d:
            d["cells"] = tuple(int(v) for v in d["cells"])
        return cls(**d)


def default_backend(target_class: str, **overrides) -> BackendSpec:
    if target_class == "whole_pole":
        base = dict(cells=(8, 3), context=1.25, n_sizes=6)
    else:
        base = dict(cells=(5, 5), context=3.0, n_sizes=3)
    base.update(overrides)
    return BackendSpec(**base)


# ---------------------------------------------------------------------------
# rasters and features


def as_raster(image) -> np.ndarray:
    """Validate and convert an image to a float64 array of intensities in [0, 1]."""
    arr = np.asarray(image)
    if arr.ndim != 2 or arr.size == 0:
        raise InvalidImage(f"expected a non-empty 2-D raster, got shape {arr.shape}")
    if arr.dtype == np.uint8:
        return arr.astype(np.float64) / 255.0
    arr = arr.astype(np.float64)
    if not np.isfinite(arr).all():
        raise InvalidImage("raster contains non-finite values")
    return arr


def to_input(raster: np.ndarray, side: int) -> tuple[np.ndarray, float, float]:
    """Resize so the longer side is ``side``; returns the image and x/y scale factors."""
    h, w = raster.shape
    s = side / max(h, w)
    w2, h2 = max(1, round(w * s)), max(1, round(h * s))
    if (w2, h2) == (w, h):
        return raster.astype(np.float64), 1.0, 1.0
    resample = Image.BOX if s < 1 else Image.BILINEAR
    im = Image.fromarray(raster.astype(np.float32), mode="F").resize((w2, h2), resample)
    return np.asarray(im, dtype=np.float64), w2 / w, h2 / h


@dataclass(frozen=True)
class WindowGeometry:
    height: int
    width: int
    cell_h: int
    cell_w: int
    off_y: int  # region top relative to window top
    off_x: int
    stride: int

    @classmethod
    def build(cls, height: int, width: int, spec: BackendSpec) -> "WindowGeometry":
        gy, gx = spec.cells
        ch = max(1, round(spec.context * height / gy))
        cw = max(1, round(spec.context * width / gx))
        stride = max(1, round(spec.stride_fraction * min(height, width)))
        return cls(height, width, ch, cw, (height - gy * ch) // 2, (width - gx * cw) // 2, stride)

    def margin(self, spec: BackendSpec) -> int:
        gy, gx = spec.cells
        return max(
            -self.off_y, self.off_y + gy * self.cell_h - self.height,
            -self.off_x, self.off_x + gx * self.cell_w - self.width, 0,
        )


class FeatureMap:
    """Padded channel stack of one input image with cached cell box-sums."""

    def __init__(self, image: np.ndarray, pad: int, n_orientations: int):
        self.height, self.width = image.shape
        self.pad = pad
        padded = np.pad(image, pad, mode="edge")
        gy, gx = np.gradient(padded) if min(padded.shape) >= 2 else (np.zeros_like(padded),) * 2
        mag = np.hypot(gx, gy)
        ori = np.mod(np.arctan2(gy, gx), np.pi)
        bins = np.minimum((ori / np.pi * n_orientations).astype(np.int64), n_orientations - 1)
        channels = [padded] + [np.where(bins == k, mag, 0.0) for k in range(n_orientations)]
        stack = np.stack(channels)
        integral = np.zeros((stack.shape[0], stack.shape[1] + 1, stack.shape[2] + 1))
        integral[:, 1:, 1:] = stack.cumsum(axis=1).cumsum(axis=2)
        self._integral = integral
        self._sums: dict[tuple[int, int], np.ndarray] = {}

    def cell_means(self, ch: int, cw: int) -> np.ndarray:
        """Mean of each channel over every ``ch x cw`` block, indexed by block top-left (padded)."""
        key = (ch, cw)
        if key not in self._sums:
            ii = self._integral
            s = ii[:, ch:, cw:] - ii[:, :-ch, cw:] - ii[:, ch:, :-cw] + ii[:, :-ch, :-cw]
            self._sums[key] = s / float(ch * cw)
        return self._sums[key]

    def positions(self, geom: WindowGeometry) -> tuple[np.ndarray, np.ndarray]:
        ys = np.arange(0, self.height - geom.height + 1, geom.stride)
        xs = np.arange(0, self.width - geom.width + 1, geom.stride)
        return ys, xs

    def features(self, geom: WindowGeometry, ys: np.ndarray, xs: np.ndarray, cells: tuple[int, int]) -> np.ndarray:
        """Feature rows for windows with top-left corners ``(ys[i], xs[i])``."""
        gy, gx = cells
        means = self.cell_means(geom.cell_h, geom.cell_w)
        rows = ys[:, None] + self.pad + geom.off_y + geom.cell_h * np.arange(gy)[None, :]
        cols = xs[:, None] + self.pad + geom.off_x + geom.cell_w * np.arange(gx)[None, :]
        f = means[:, rows[:, :, None], cols[:, None, :]]  # (C, n, gy, gx)
        f = np.moveaxis(f, 1, 0).copy()  # (n, C, gy, gx)
        f[:, 0] -= f[:, 0].mean(axis=(1, 2), keepdims=True)
        return f.reshape(len(ys), -1)

    def score_grid(self, geom: WindowGeometry, cell_weights: np.ndarray, bias: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Linear response at every stride position; ``cell_weights`` has shape (C, gy, gx)."""
        ys, xs = self.positions(geom)
        z = np.full((len(ys), len(xs)), bias, dtype=np.float64)
        if len(ys) == 0 or len(xs) == 0:
            return ys, xs, z
        means = self.cell_means(geom.cell_h, geom.cell_w)
        _, gy, gx = cell_weights.shape
        span_y = (len(ys) - 1) * geom.stride + 1
        span_x = (len(xs) - 1) * geom.stride + 1
        for k in range(gy):
            y0 = self.pad + geom.off_y + k * geom.cell_h
            for j in range(gx):
                x0 = self.pad + geom.off_x + j * geom.cell_w
                block = means[:, y0:y0 + span_y:geom.stride, x0:x0 + span_x:geom.stride]
                z += np.tensordot(cell_weights[:, k, j], block, axes=1)
        return ys, xs, z


# ---------------------------------------------------------------------------
# model


@dataclass
class DetectorModel:
    backend: BackendSpec
    target_class: str
    window_sizes: list[tuple[int, int]]
    weights: np.ndarray
    bias: float
    feature_mean: np.ndarray
    feature_std: np.ndarray
    metadata: dict = field(default_factory=dict)

    @property
    def backend_id(self) -> str:
        return self.backend.backend_id

    def geometries(self) -> list[WindowGeometry]:
        return [WindowGeometry.build(h, w, self.backend) for h, w in self.window_sizes]

    @property
    def pad(self) -> int:
        return max(g.margin(self.backend) for g in self.geometries()) + 1

    def cell_weights(self) -> tuple[np.ndarray, float]:
        """Fold standardisation and relative intensity into per-cell weights."""
        gy, gx = self.backend.cells
        u = self.weights / self.feature_std
        bias = float(self.bias - np.dot(u, self.feature_mean))
        v = u.reshape(-1, gy, gx).copy()
        v[0] -= v[0].sum() / (gy * gx)
        return v, bias

    def to_payload(self) -> dict:
        return {
            "backend": self.backend.to_dict(),
            "bias": float(self.bias),
            "feature_mean": [float(v) for v in self.feature_mean],
            "feature_std": [float(v) for v in self.feature_std],
            "metadata": self.metadata,
            "target_class": self.target_class,
            "weights": [float(v) for v in self.weights],
            "window_sizes": [list(s) for s in self.window_sizes],
        }

    @classmethod
    def from_payload(cls, p: dict) -> "DetectorModel":
        return cls(
            backend=BackendSpec.from_dict(p["backend"]),
            target_class=p["target_class"],
            window_sizes=[tuple(int(v) for v in s) for s in p["window_sizes"]],
            weights=np.asarray(p["weights"], dtype=np.float64),
            bias=float(p["bias"]),
            feature_mean=np.asarray(p["feature_mean"], dtype=np.float64),
            feature_std=np.asarray(p["feature_std"], dtype=np.float64),
            metadata=dict(p["metadata"]),
        )

    def header_info(self) -> dict:
        return {
            "backend_id": self.backend_id,
            "corpus_digest": self.metadata.get("corpus_digest"),
            "seed": self.metadata.get("seed"),
            "target_class": self.target_class,
        }

    def to_bytes(self) -> bytes:
        return artifacts.dumps(MODEL_KIND, self.to_payload(), self.header_info())

    def digest(self) -> str:
        return hashlib.sha256(self.to_bytes()).hexdigest()

    def save(self, path) -> str:
        return artifacts.write(path, MODEL_KIND, self.to_payload(), self.header_info())

    @classmethod
    def load(cls, path) -> "DetectorModel":
        _, payload = artifacts.read(path, MODEL_KIND)
        return cls.from_payload(payload)


# ---------------------------------------------------------------------------
# inference


def _nms_arrays(boxes: np.ndarray, scores: np.ndarray, iou_threshold: float, limit: int) -> list[int]:
    """Greedy NMS on (n, 4) arrays with the (score desc, x_min asc, y_min asc) order."""
    order = np.lexsort((boxes[:, 1], boxes[:, 0], -scores))
    x0, y0, x1, y1 = boxes.T
    area = (x1 - x0) * (y1 - y0)
    keep: list[int] = []
    alive = np.ones(len(order), dtype=bool)
    for pos, i in enumerate(order):
        if not alive[pos]:
            continue
        keep.append(int(i))
        if len(keep) >= limit:
            break
        rest = order[pos + 1:]
        iw = np.clip(np.minimum(x1[rest], x1[i]) - np.maximum(x0[rest], x0[i]), 0, None)
        ih = np.clip(np.minimum(y1[rest], y1[i]) - np.maximum(y0[rest], y0[i]), 0, None)
        inter = iw * ih
        union = area[rest] + area[i] - inter
        ov = np.where(union > 0, inter / np.where(union > 0, union, 1.0), 0.0)
        alive[pos + 1:] &= ov < iou_threshold
    return keep


def _candidates(model: DetectorModel, fm: FeatureMap, min_z: float) -> np.ndarray:
    """Rows of (z, y, x, h, w) for windows with response >= ``min_z`` in input coordinates."""
    v, b = model.cell_weights()
    out = []
    for geom in model.geometries():
        ys, xs, z = fm.score_grid(geom, v, b)
        iy, ix = np.nonzero(z >= min_z)
        if len(iy) == 0:
            continue
        out.append(np.column_stack([z[iy, ix], ys[iy], xs[ix],
                                    np.full(len(iy), geom.height), np.full(len(iy), geom.width)]))
    if not out:
        return np.zeros((0, 5))
    return np.concatenate(out)


def _logit(p: float) -> float:
    if p <= 0.0:
        return -math.inf
    if p >= 1.0:
        return math.inf
    return math.log(p / (1.0 - p))


def detect(model: DetectorModel, image, confidence_threshold: float = 0.5, frame: Frame = GLOBAL) -> list[Detection]:
    """Detections in the frame of ``image`` (tagged ``frame``), NMS-filtered, best first."""
    raster = as_raster(image)
    if confidence_threshold > 1.0:
        return []
    img, sx, sy = to_input(raster, model.backend.input_side)
    fm = FeatureMap(img, model.pad, model.backend.n_orientations)
    cand = _candidates(model, fm, _logit(confidence_threshold) - 1e-9)
    if len(cand) == 0:
        return []
    conf = expit(cand[:, 0])
    keep = conf >= confidence_threshold
    cand, conf = cand[keep], conf[keep]
    if len(cand) > model.backend.max_candidates:
        top = np.argsort(-conf, kind="stable")[: model.backend.max_candidates]
        cand, conf = cand[top], conf[top]
    h, w = raster.shape
    boxes = np.column_stack([
        cand[:, 2] / sx, cand[:, 1] / sy, (cand[:, 2] + cand[:, 4]) / sx, (cand[:, 1] + cand[:, 3]) / sy,
    ])
    boxes = np.clip(boxes, 0, [w, h, w, h])
    boxes = np.round(boxes * 1024.0) / 1024.0
    keep = _nms_arrays(boxes, conf, model.backend.nms_iou, model.backend.max_detections)
    return [
        Detection(BoundingBox(*(quantize(float(c)) for c in boxes[i]), frame=frame), model.target_class, float(conf[i]))
        for i in keep
    ]


# ---------------------------------------------------------------------------
# training


@dataclass
class _View:
    """One training raster at input scale with target boxes as (x0, y0, x1, y1) rows."""

    key: str
    image: np.ndarray
    boxes: np.ndarray


def _box_iou_many(box: np.ndarray, others: np.ndarray) -> np.ndarray:
    if len(others) == 0:
        return np.zeros(0)
    iw = np.clip(np.minimum(box[2], others[:, 2]) - np.maximum(box[0], others[:, 0]), 0, None)
    ih = np.clip(np.minimum(box[3], others[:, 3]) - np.maximum(box[1], others[:, 1]), 0, None)
    inter = iw * ih
    union = (box[2] - box[0]) * (box[3] - box[1]) + (others[:, 2] - others[:, 0]) * (others[:, 3] - others[:, 1]) - inter
    return np.where(union > 0, inter / np.where(union > 0, union, 1), 0.0)


def _jitter(box: BoundingBox, rng: np.random.Generator, amount: float = 0.06) -> BoundingBox:
    w, h = box.width, box.height
    dx0, dx1 = rng.uniform(-amount, amount, 2) * w
    dy0, dy1 = rng.uniform(-amount, amount, 2) * h
    x0, x1 = box.x_min + dx0, box.x_max + dx1
    y0, y1 = box.y_min + dy0, box.y_max + dy1
    return BoundingBox(min(x0, x1), min(y0, y1), max(x0, x1), max(y0, y1), box.frame)


def _views(
    manifest: DatasetManifest, target_class: str, spec: BackendSpec, seed: int, zoom_config: CascadeConfig | None
) -> Iterator[_View]:
    for idx, entry in enumerate(manifest.entries):
        raster = as_raster(manifest.load_image(entry).raster)
        targets = entry.boxes(target_class)
        if zoom_config is None:
            regions = [(None, raster, targets)]
        else:
            rng = np.random.default_rng([seed, idx])
            regions = []
            for k, pole in enumerate(entry.boxes("whole_pole")):
                variants = [pole] + [_jitter(pole, rng) for _ in range(spec.jitter_crops)]
                for v, region in enumerate(variants):
                    crop, _sel, half, half_raster = zoom(raster, region, zoom_config)
                    local = []
                    for t in targets:
                        t_half = transform_box(transform_box(t, crop, Direction.TO_LOCAL), half, Direction.TO_LOCAL)
                        if (t_half.x_min >= 0 and t_half.y_min >= 0 and t_half.x_max <= half.width
                                and t_half.y_max <= half.height):
                            local.append(t_half)
                    regions.append((f"{k}.{v}", half_raster, local))
        for tag, r, boxes in regions:
            if r.shape[0] < 2 or r.shape[1] < 2:
                continue
            img, sx, sy = to_input(r, spec.input_side)
            arr = np.array([[b.x_min * sx, b.y_min * sy, b.x_max * sx, b.y_max * sy] for b in boxes]).reshape(-1, 4)
            yield _View(f"{entry.source_id}/{tag}", img, arr)


def _cluster_sizes(hw: np.ndarray, k: int) -> list[tuple[int, int]]:
    """Deterministic k-means on log box sizes, seeded at log-area quantiles."""
    pts = np.log(np.maximum(hw, 1.0))
    order = np.argsort(pts.sum(axis=1), kind="stable")
    k = max(1, min(k, len(pts)))
    centers = pts[order[((np.arange(k) + 0.5) * len(pts) / k).astype(int)]].copy()
    for _ in range(50):
        d = ((pts[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        assign = d.argmin(axis=1)
        new = np.array([pts[assign == j].mean(axis=0) if np.any(assign == j) else centers[j] for j in range(k)])
        if np.allclose(new, centers):
            break
        centers = new
    sizes = sorted({(max(1, int(round(math.exp(c[0])))), max(1, int(round(math.exp(c[1]))))) for c in centers})
    return sizes


def _positive_rows(view: _View, fm: FeatureMap, geoms, spec: BackendSpec):
    feats = []
    for box in view.boxes:
        cands = []
        cy, cx = (box[1] + box[3]) / 2, (box[0] + box[2]) / 2
        for g in geoms:
            r = max(1, g.stride)
            y_c, x_c = int(round(cy - g.height / 2)), int(round(cx - g.width / 2))
            for dy in range(-r, r + 1):
                for dx in range(-r, r + 1):
                    y, x = y_c + dy, x_c + dx
                    if not (0 <= y <= fm.height - g.height and 0 <= x <= fm.width - g.width):
                        continue
                    win = np.array([x, y, x + g.width, y + g.height], dtype=float)
                    cands.append((_box_iou_many(win, box[None, :])[0], y, x, g))
        if not cands:
            continue
        cands.sort(key=lambda c: (-c[0], c[1], c[2], c[3].height, c[3].width))
        chosen = [c for c in cands if c[0] >= spec.positive_iou][:12] or [cands[0]]
        if chosen[0][0] < spec.negative_iou:
            continue
        for _, y, x, g in chosen:
            feats.append(fm.features(g, np.array([y]), np.array([x]), spec.cells))
    return feats


def _random_negative_rows(view: _View, fm: FeatureMap, geoms, spec: BackendSpec, rng: np.random.Generator):
    feats = []
    tries = 0
    while len(feats) < spec.negatives_per_image and tries < spec.negatives_per_image * 20:
        tries += 1
        g = geoms[int(rng.integers(len(geoms)))]
        if fm.height < g.height or fm.width < g.width:
            continue
        if len(view.boxes) and rng.random() < 0.4:
            # near misses around a target teach localisation
            b = view.boxes[int(rng.integers(len(view.boxes)))]
            y = int(round(b[1] + rng.uniform(-1.5, 1.5) * g.height))
            x = int(round(b[0] + rng.uniform(-1.5, 1.5) * g.width))
            y = min(max(y, 0), fm.height - g.height)
            x = min(max(x, 0), fm.width - g.width)
        else:
            y = int(rng.integers(0, fm.height - g.height + 1))
            x = int(rng.integers(0, fm.width - g.width + 1))
        win = np.array([x, y, x + g.width, y + g.height], dtype=float)
        if len(view.boxes) and _box_iou_many(win, view.boxes).max() >= spec.negative_iou:
            continue
        feats.append(fm.features(g, np.array([y]), np.array([x]), spec.cells))
    return feats


def _mined_negative_rows(view: _View, fm: FeatureMap, model: DetectorModel, spec: BackendSpec):
    cand = _candidates(model, fm, -math.inf)
    if len(cand) == 0:
        return []
    wins = np.column_stack([cand[:, 2], cand[:, 1], cand[:, 2] + cand[:, 4], cand[:, 1] + cand[:, 3]])
    if len(view.boxes):
        ious = np.stack([_box_iou_many(b, wins) for b in view.boxes]).max(axis=0)
        keep = ious < spec.negative_iou
        cand, wins = cand[keep], wins[keep]
    if len(cand) == 0:
        return []
    top = np.argsort(-cand[:, 0], kind="stable")[: max(200, spec.mined_per_image)]
    chosen = _nms_arrays(wins[top], cand[top, 0], 0.5, spec.mined_per_image)
    feats = []
    geom_by_size = {(g.height, g.width): g for g in model.geometries()}
    for i in top[chosen]:
        g = geom_by_size[(int(cand[i, 3]), int(cand[i, 4]))]
        feats.append(fm.features(g, np.array([int(cand[i, 1])]), np.array([int(cand[i, 2])]), spec.cells))
    return feats


def _fit_linear(X: np.ndarray, y: np.ndarray, l2: float, init: np.ndarray | None):
    """L2-regularised, class-balanced logistic regression on standardised features."""
    n_pos, n_neg = int(y.sum()), int(len(y) - y.sum())
    sw = np.where(y == 1, 0.5 / n_pos, 0.5 / n_neg)

    def objective(theta):
        w, b = theta[:-1], theta[-1]
        z = X @ w + b
        # log(1 + exp(-t)) with t = +-z
        t = np.where(y == 1, z, -z)
        loss = np.sum(sw * np.logaddexp(0.0, -t)) + 0.5 * l2 * np.dot(w, w)
        g = sw * (expit(z) - y)
        grad = np.concatenate([X.T @ g + l2 * w, [g.sum()]])
        return loss, grad

    theta0 = np.zeros(X.shape[1] + 1) if init is None else init
    res = minimize(objective, theta0, jac=True, method="L-BFGS-B", options={"maxiter": 1000})
    return res.x


def train_detector(
    train: DatasetManifest,
    target_class: str,
    backend: BackendSpec | None = None,
    seed: int = 0,
    zoom_config: CascadeConfig | None = None,
) -> DetectorModel:
    """Fit a sliding-window detector for ``target_class``.

    With ``zoom_config`` the detector is trained on the same zoomed views the
    cascade produces at inference: the whole-pole box (plus jittered copies)
    padded, cropped, and reduced to its informative half.
    """
    if target_class not in TARGET_CLASSES:
        raise InvalidParams(f"target_class must be one of {TARGET_CLASSES}, got {target_class!r}")
    spec = backend if backend is not None else default_backend(target_class)
    if not any(e.boxes(target_class) for e in train.entries):
        raise EmptyTargetClass(f"no {target_class!r} annotations in the training manifest")

    sizes_hw = [
        (b[3] - b[1], b[2] - b[0])
        for v in _views(train, target_class, spec, seed, zoom_config)
        for b in v.boxes
    ]
    if not sizes_hw:
        raise EmptyTargetClass(f"no {target_class!r} annotations survive cropping")
    window_sizes = _cluster_sizes(np.asarray(sizes_hw, dtype=float), spec.n_sizes)
    geoms = [WindowGeometry.build(h, w, spec) for h, w in window_sizes]
    pad = max(g.margin(spec) for g in geoms) + 1

    rng = np.random.default_rng(seed)
    pos_rows, neg_rows = [], []
    for v in _views(train, target_class, spec, seed, zoom_config):
        fm = FeatureMap(v.image, pad, spec.n_orientations)
        pos_rows += _positive_rows(v, fm, geoms, spec)
        neg_rows += _random_negative_rows(v, fm, geoms, spec, rng)
    # a flat patch is never a target
    flat = FeatureMap(np.full((max(h for h, _ in window_sizes) * 2 + 2, max(w for _, w in window_sizes) * 2 + 2), 0.5),
                      pad, spec.n_orientations)
    for g in geoms:
        neg_rows.append(flat.features(g, np.array([0]), np.array([0]), spec.cells))

    def fit(init):
        X = np.vstack(pos_rows + neg_rows)
        y = np.r_[np.ones(len(pos_rows)), np.zeros(len(neg_rows))]
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        std = np.where(std > 1e-8, std, 1.0)
        theta = _fit_linear((X - mean) / std, y, spec.l2, init)
        return DetectorModel(spec, target_class, window_sizes, theta[:-1].copy(), float(theta[-1]), mean, std), theta

    model, theta = fit(None)
    for round_ in range(spec.mining_rounds):
        mined = []
        for v in _views(train, target_class, spec, seed, zoom_config):
            fm = FeatureMap(v.image, pad, spec.n_orientations)
            mined += _mined_negative_rows(v, fm, model, spec)
        log.info("%s mining round %d: %d hard negatives", target_class, round_ + 1, len(mined))
        neg_rows += mined
        model, theta = fit(None)

    model.metadata = {
        "corpus_digest": train.digest(),
        "n_negative_windows": len(neg_rows),
        "n_positive_windows": len(pos_rows),
        "seed": int(seed),
        "zoom": zoom_config.to_dict() if zoom_config is not None else None,
    }
    return model
