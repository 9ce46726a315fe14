"""Synthetic pole scenes, dataset manifests and the train/test/pool split.

A scene is a large grayscale image with one distribution pole: a tapered
shaft, cross-arms with insulators and bracing near the top, wires, and
optionally a small cap sitting on the apex.  Background clutter includes
small cap-like blobs, so a detector looking at the whole image at low
resolution has plenty to confuse the cap with.  The lower half of the pole
region is deliberately plain.
"""

from __future__ import annotations

import enum
import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable

import numpy as np
from PIL import Image

from .errors import CorpusWriteError, InsufficientPositives, InvalidParams
from .geometry import GLOBAL, BoundingBox, ImageExtent

GENERATOR_VERSION = "poleinspect-scene/1"
CLASSES = ("whole_pole", "cross_arm", "pole_cap")

# Pole-type counts from the inspection sample; wood is the majority class.
POLE_TYPE_TABLE3 = {
    "Aluminium": 1,
    "Concrete": 1027,
    "Nailed": 2558,
    "Rebutted": 671,
    "Steel": 10,
    "Unknown": 48,
    "Wood": 99330,
    "Wood Multi/Trans": 2,
    "Wood x2 - PT": 2,
}
PRESETS = {"POLE_TYPE_TABLE3": POLE_TYPE_TABLE3}
PRESET_NEGATIVE_CLASS = {"POLE_TYPE_TABLE3": "Wood"}


class ConditionLabel(str, enum.Enum):
    POSITIVE = "POSITIVE"  # cap missing
    NEGATIVE = "NEGATIVE"  # cap present

    @property
    def is_positive(self) -> bool:
        return self is ConditionLabel.POSITIVE


@dataclass(frozen=True)
class SceneParams:
    extent: ImageExtent = ImageExtent(1024, 1536)
    pole_width_fraction: tuple[float, float] = (0.02, 0.05)
    cap_size_px: int = 12
    cap_present: bool = True
    clutter_density: float = 0.5
    noise_sigma: float = 0.03

    # shaft top is this fraction of the base width
    TOP_TAPER = 0.8

    def validate(self) -> None:
        lo, hi = self.pole_width_fraction
        if not (0 < lo <= hi < 0.5):
            raise InvalidParams(f"pole_width_fraction range invalid: {self.pole_width_fraction}")
        if self.cap_size_px < 4:
            raise InvalidParams(f"cap_size_px must be >= 4, got {self.cap_size_px}")
        if not 0.0 <= self.clutter_density <= 1.0:
            raise InvalidParams(f"clutter_density must be in [0,1], got {self.clutter_density}")
        if self.noise_sigma < 0:
            raise InvalidParams("noise_sigma must be non-negative")
        if self.cap_size_px ** 2 / self.extent.area >= 0.001:
            raise InvalidParams("cap is not tiny: cap area must stay below 0.1% of the image")
        top_width = math.floor(self.TOP_TAPER * lo * self.extent.width)
        if self.cap_size_px > top_width:
            raise InvalidParams(
                f"cap ({self.cap_size_px}px) wider than the narrowest pole top ({top_width}px)"
            )
        if self.extent.height < 64 or self.extent.width < 64:
            raise InvalidParams("extent too small for a pole scene")

    def to_dict(self) -> dict:
        return {
            "extent": [self.extent.width, self.extent.height],
            "pole_width_fraction": list(self.pole_width_fraction),
            "cap_size_px": self.cap_size_px,
            "cap_present": self.cap_present,
            "clutter_density": self.clutter_density,
            "noise_sigma": self.noise_sigma,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SceneParams":
        d = dict(d)
        if "extent" in d:
            w, h = d.pop("extent")
            d["extent"] = ImageExtent(int(w), int(h))
        if "pole_width_fraction" in d:
            d["pole_width_fraction"] = tuple(float(v) for v in d["pole_width_fraction"])
        return cls(**d)


@dataclass(frozen=True)
class Annotation:
    class_name: str
    box: BoundingBox


@dataclass
class LabeledImage:
    raster: np.ndarray  # uint8, H x W
    annotations: tuple[Annotation, ...]
    condition_label: ConditionLabel
    source_id: str

    @property
    def pixels(self) -> np.ndarray:
        return self.raster.astype(np.float32) / 255.0

    @property
    def extent(self) -> ImageExtent:
        return ImageExtent.of(self.raster)

    def boxes(self, class_name: str) -> list[BoundingBox]:
        return [a.box for a in self.annotations if a.class_name == class_name]


@dataclass(frozen=True)
class ManifestEntry:
    source_id: str
    image_path: str
    annotations: tuple[Annotation, ...]
    condition_label: ConditionLabel

    def boxes(self, class_name: str) -> list[BoundingBox]:
        return [a.box for a in self.annotations if a.class_name == class_name]


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry]
    seed: int
    generator_version: str = GENERATOR_VERSION
    root: Path = field(default=Path("."), compare=False)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def positives(self) -> list[ManifestEntry]:
        return [e for e in self.entries if e.condition_label is ConditionLabel.POSITIVE]

    def negatives(self) -> list[ManifestEntry]:
        return [e for e in self.entries if e.condition_label is ConditionLabel.NEGATIVE]

    def subset(self, entries: Iterable[ManifestEntry]) -> "DatasetManifest":
        return DatasetManifest(list(entries), self.seed, self.generator_version, self.root)

    def image_path(self, entry: ManifestEntry) -> Path:
        return self.root / entry.image_path

    def load_image(self, entry: ManifestEntry) -> LabeledImage:
        with Image.open(self.image_path(entry)) as im:
            raster = np.asarray(im.convert("L"), dtype=np.uint8).copy()
        return LabeledImage(raster, entry.annotations, entry.condition_label, entry.source_id)

    def to_lines(self) -> list[str]:
        header = {"generator_version": self.generator_version, "n_entries": len(self.entries), "seed": self.seed}
        lines = [json.dumps(header, sort_keys=True, separators=(",", ":"))]
        for e in self.entries:
            rec = {
                "annotations": [[a.class_name, *a.box.as_tuple()] for a in e.annotations],
                "condition_label": e.condition_label.value,
                "image_path": e.image_path,
                "source_id": e.source_id,
            }
            lines.append(json.dumps(rec, sort_keys=True, separators=(",", ":")))
        return lines

    def digest(self) -> str:
        return hashlib.sha256("\n".join(self.to_lines()).encode()).hexdigest()

    def save(self, path: str | Path) -> Path:
        """Write the manifest; image paths are relative to its directory."""
        path = Path(path)
        moved = self._rebased(path.parent.resolve())
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text("\n".join(moved.to_lines()) + "\n")
        except OSError as exc:
            raise CorpusWriteError(f"cannot write manifest {path}: {exc}") from exc
        return path

    def _rebased(self, new_root: Path) -> "DatasetManifest":
        old_root = Path(self.root).resolve()
        if old_root == new_root:
            return self
        entries = []
        for e in self.entries:
            abs_path = (old_root / e.image_path).resolve()
            rel = Path(_relpath(abs_path, new_root)).as_posix()
            entries.append(replace(e, image_path=rel))
        return DatasetManifest(entries, self.seed, self.generator_version, new_root)

    @classmethod
    def load(cls, path: str | Path) -> "DatasetManifest":
        path = Path(path)
        lines = path.read_text().splitlines()
        header = json.loads(lines[0])
        entries = []
        for line in lines[1:]:
            if not line.strip():
                continue
            rec = json.loads(line)
            anns = tuple(Annotation(a[0], BoundingBox(*a[1:5], frame=GLOBAL)) for a in rec["annotations"])
            entries.append(
                ManifestEntry(rec["source_id"], rec["image_path"], anns, ConditionLabel(rec["condition_label"]))
            )
        if len(entries) != header["n_entries"]:
            raise ValueError(f"manifest {path} declares {header['n_entries']} entries, found {len(entries)}")
        return cls(entries, int(header["seed"]), header["generator_version"], path.parent.resolve())


def _relpath(target: Path, start: Path) -> str:
    import os

    return os.path.relpath(target, start)


@dataclass(frozen=True)
class ImbalanceConfig:
    n_positive: int
    ratio: int
    class_counts_preset: str | None = None

    def __post_init__(self):
        if self.n_positive < 1:
            raise InvalidParams("n_positive must be >= 1")
        if int(self.ratio) != self.ratio or self.ratio < 1:
            raise InvalidParams(f"ratio must be an integer >= 1, got {self.ratio}")
        if self.class_counts_preset is not None and self.class_counts_preset not in PRESETS:
            raise InvalidParams(f"unknown preset {self.class_counts_preset!r}")

    @property
    def n_negative(self) -> int:
        return self.n_positive * int(self.ratio)

    @classmethod
    def from_preset(cls, name: str, n_positive: int) -> "ImbalanceConfig":
        """Negatives-per-positive taken from a named class-count table.

        For the pole-type table, Wood is negative and every other type
        (Unknown included) is positive.
        """
        counts = PRESETS[name]
        neg = counts[PRESET_NEGATIVE_CLASS[name]]
        pos = sum(v for k, v in counts.items() if k != PRESET_NEGATIVE_CLASS[name])
        return cls(n_positive, max(1, round(neg / pos)), name)


def preset_counts(name: str, total: int) -> dict[str, int]:
    """Scale a preset's class counts to ``total`` by largest remainder."""
    counts = PRESETS[name]
    full = sum(counts.values())
    raw = {k: v * total / full for k, v in counts.items()}
    out = {k: math.floor(v) for k, v in raw.items()}
    short = total - sum(out.values())
    for k in sorted(raw, key=lambda k: (-(raw[k] - out[k]), k))[:short]:
        out[k] += 1
    return out


# ---------------------------------------------------------------------------
# scene rendering


def _fill_rect(img, x0, y0, x1, y1, value):
    h, w = img.shape
    x0, x1 = max(int(round(x0)), 0), min(int(round(x1)), w)
    y0, y1 = max(int(round(y0)), 0), min(int(round(y1)), h)
    if x1 > x0 and y1 > y0:
        img[y0:y1, x0:x1] = value


def _draw_line(img, x0, y0, x1, y1, value, thickness=1):
    n = int(max(abs(x1 - x0), abs(y1 - y0))) + 1
    xs = np.linspace(x0, x1, n)
    ys = np.linspace(y0, y1, n)
    h, w = img.shape
    half = thickness // 2
    for d in range(-half, thickness - half):
        yy = np.round(ys).astype(int) + d
        xx = np.round(xs).astype(int)
        ok = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
        img[yy[ok], xx[ok]] = value


def _draw_small_object(img, x0, y0, size_w, size_h, style, value):
    """Cap-shaped object filling the box (x0, y0, x0+size_w, y0+size_h)."""
    yy, xx = np.mgrid[0:size_h, 0:size_w]
    u = (xx + 0.5) / size_w  # 0..1 across
    v = (yy + 0.5) / size_h  # 0..1 down
    if style == "block":
        mask = np.ones_like(u, dtype=bool)
    elif style == "dome":
        mask = (2 * u - 1) ** 2 + (1 - v) ** 2 <= 1.0
    else:  # cone
        mask = np.abs(2 * u - 1) <= v
    h, w = img.shape
    ys, xs = yy[mask] + int(y0), xx[mask] + int(x0)
    ok = (ys >= 0) & (ys < h) & (xs >= 0) & (xs < w)
    img[ys[ok], xs[ok]] = value


def _small_object_value(rng):
    if rng.random() < 0.5:
        return rng.uniform(0.82, 0.97)
    return rng.uniform(0.03, 0.14)


def _draw_clutter(img, rng, params: SceneParams, ground_y: int, pole_val: float) -> None:
    W = img.shape[1]
    cap = params.cap_size_px
    n_clutter = int(round(params.clutter_density * 60))
    for _ in range(n_clutter):
        kind = rng.random()
        x = rng.uniform(0, W)
        y = rng.uniform(0, ground_y)
        if kind < 0.55:
            # cap look-alikes, often on a short post
            s = cap * rng.uniform(0.8, 1.25)
            _draw_small_object(img, x, y, int(round(s)), int(round(s)),
                               ("block", "dome", "cone")[int(rng.integers(3))], _small_object_value(rng))
            if rng.random() < 0.5:
                _fill_rect(img, x + s * 0.1, y + s, x + s * 0.9, y + s * rng.uniform(2, 6), pole_val)
        elif kind < 0.8:
            length = rng.uniform(20, 120)
            ang = rng.uniform(0, math.pi)
            _draw_line(img, x, y, x + length * math.cos(ang), y + length * math.sin(ang),
                       rng.uniform(0.05, 0.35), thickness=int(rng.integers(1, 4)))
        else:
            r = rng.uniform(15, 45)
            yy, xx = np.ogrid[-int(r):int(r) + 1, -int(r):int(r) + 1]
            ys, xs = np.nonzero((xx ** 2 + yy ** 2) <= r * r)
            ys, xs = ys + int(y) - int(r), xs + int(x) - int(r)
            ok = (ys >= 0) & (ys < ground_y) & (xs >= 0) & (xs < W)
            img[ys[ok], xs[ok]] = rng.uniform(0.2, 0.45) + rng.normal(0, 0.08, size=int(ok.sum()))


def generate_scene(params: SceneParams, seed: int, source_id: str | None = None) -> LabeledImage:
    params.validate()
    rng = np.random.default_rng(seed)
    W, H = params.extent.width, params.extent.height
    cap = params.cap_size_px

    sky = rng.uniform(0.55, 0.75)
    img = np.full((H, W), sky, dtype=np.float64)

    ground_y = int(round(H * rng.uniform(0.86, 0.94)))
    # sparse base: ground tone close to the sky
    ground = sky + rng.uniform(-0.04, 0.04)

    pole_w = W * rng.uniform(*params.pole_width_fraction)
    top_w = max(params.TOP_TAPER * pole_w, float(cap))
    arm_w = W * rng.uniform(0.14, 0.22)
    half_span = max(arm_w, pole_w) / 2.0
    cx = round(rng.uniform(half_span + 0.05 * W, W - half_span - 0.05 * W))
    pole_top = int(round(H * rng.uniform(0.1, 0.25)))
    pole_val = rng.uniform(0.18, 0.32)
    pole_h = ground_y - pole_top

    _draw_clutter(img, rng, params, ground_y, pole_val)
    # keep a clean column band around the pole
    band = int(round(0.03 * W))
    bx0, bx1 = max(int(cx - half_span) - band, 0), min(int(cx + half_span) + band, W)
    img[:ground_y, bx0:bx1] = sky

    img[ground_y:, :] = ground + rng.normal(0.0, 0.015, size=(H - ground_y, W))

    # tapered shaft
    rows = np.arange(pole_top, ground_y)
    frac = (rows - pole_top) / max(pole_h - 1, 1)
    half_w = (top_w + (pole_w - top_w) * frac) / 2.0
    cols = np.arange(W)
    mask = np.abs(cols[None, :] + 0.5 - cx) <= half_w[:, None]
    img[pole_top:ground_y][mask] = pole_val

    annotations: list[Annotation] = []

    # cross-arms with braces, insulators and wires
    n_arms = int(rng.integers(1, 3))
    arm_y = pole_top + pole_h * rng.uniform(0.05, 0.1)
    ins_h = max(int(round(cap * rng.uniform(0.7, 1.1))), 3)
    ins_w = max(int(round(cap * rng.uniform(0.5, 0.8))), 3)
    for k in range(n_arms):
        thick = rng.uniform(8, 14)
        ay = arm_y + k * pole_h * rng.uniform(0.06, 0.09)
        this_w = arm_w * (1.0 if k == 0 else rng.uniform(0.75, 1.0))
        ax0, ax1 = cx - this_w / 2, cx + this_w / 2
        arm_val = pole_val + rng.uniform(-0.05, 0.05)
        _fill_rect(img, ax0, ay, ax1, ay + thick, arm_val)
        brace_len = this_w * 0.3
        for sgn in (-1, 1):
            _draw_line(img, cx + sgn * pole_w / 2, ay + thick + brace_len * 0.8,
                       cx + sgn * brace_len, ay + thick, arm_val, thickness=3)
        ins_val = _small_object_value(rng)
        for pos in (0.06, 0.3, 0.7, 0.94):
            ix = ax0 + pos * this_w - ins_w / 2
            _fill_rect(img, ix, ay - ins_h, ix + ins_w, ay, ins_val)
            wire_y = ay - ins_h
            target_x = 0 if pos < 0.5 else W - 1
            sag = rng.uniform(-0.03, 0.03) * H
            _draw_line(img, ix + ins_w / 2, wire_y, target_x, wire_y + sag, rng.uniform(0.05, 0.2))
        box = BoundingBox(round(ax0), round(ay), round(ax1), round(ay + thick))
        annotations.append(Annotation("cross_arm", box))

    # shaded hardware (transformer can, lamp or cut-out box) on the upper shaft
    n_hw = 2
    for k in range(n_hw):
        hw_w = min(pole_w * rng.uniform(1.2, 2.2), half_span - pole_w / 2 - 2)
        hw_h = pole_h * rng.uniform(0.06, 0.12)
        hy = pole_top + pole_h * rng.uniform(0.15, 0.3)
        side = -1 if k % 2 == 0 else 1
        hx0 = cx + side * (pole_w / 2 + hw_w / 2) - hw_w / 2
        lo, hi = sorted(rng.uniform(0.1, 0.9, 2))
        shade = np.linspace(lo, hi, max(int(round(hw_w)), 1))
        x0i, y0i = int(round(hx0)), int(round(hy))
        x1i, y1i = min(x0i + len(shade), W), min(y0i + int(round(hw_h)), ground_y)
        if x1i > x0i >= 0 and y1i > y0i:
            img[y0i:y1i, x0i:x1i] = shade[None, : x1i - x0i]

    top_y = pole_top
    if params.cap_present:
        style = ("block", "dome", "cone")[int(rng.integers(3))]
        x0 = int(round(cx - cap / 2))
        y0 = pole_top - cap
        _draw_small_object(img, x0, y0, cap, cap, style, _small_object_value(rng))
        annotations.append(Annotation("pole_cap", BoundingBox(x0, y0, x0 + cap, y0 + cap)))
        top_y = y0

    whole = BoundingBox(cx - round(half_span), top_y, cx + round(half_span), ground_y)
    annotations.insert(0, Annotation("whole_pole", whole))

    if params.noise_sigma > 0:
        img += rng.normal(0.0, params.noise_sigma, size=img.shape)
    raster = np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)

    label = ConditionLabel.NEGATIVE if params.cap_present else ConditionLabel.POSITIVE
    sid = source_id if source_id is not None else f"scene-seed{seed}"
    return LabeledImage(raster, tuple(annotations), label, sid)


def scene_seed(master_seed: int, index: int) -> int:
    return int(master_seed) + int(index)


def generate_corpus(
    config: ImbalanceConfig, params: SceneParams, seed: int, out_dir: str | Path
) -> DatasetManifest:
    """Render ``n_positive`` cap-missing and ``n_positive * ratio`` cap-present scenes.

    Entry ``i`` uses scene seed ``seed + i``; positives come first.  Images go
    to ``out_dir/images`` and the manifest to ``out_dir/manifest.jsonl``.
    """
    params.validate()
    out_dir = Path(out_dir)
    img_dir = out_dir / "images"
    try:
        img_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CorpusWriteError(f"cannot create {img_dir}: {exc}") from exc
    entries = []
    n_total = config.n_positive + config.n_negative
    for i in range(n_total):
        present = i >= config.n_positive
        sid = f"scene-{i:06d}"
        scene = generate_scene(replace(params, cap_present=present), scene_seed(seed, i), sid)
        rel = f"images/{sid}.png"
        try:
            Image.fromarray(scene.raster, mode="L").save(out_dir / rel, format="PNG")
        except OSError as exc:
            raise CorpusWriteError(f"cannot write {out_dir / rel}: {exc}") from exc
        entries.append(ManifestEntry(sid, rel, scene.annotations, scene.condition_label))
    manifest = DatasetManifest(entries, int(seed), GENERATOR_VERSION, out_dir.resolve())
    manifest.save(out_dir / "manifest.jsonl")
    return manifest


@dataclass(frozen=True)
class SplitScheme:
    positive_train_fraction: float = 0.8
    negative_pool_fraction: float = 0.5


def split_dataset(
    manifest: DatasetManifest, scheme: SplitScheme = SplitScheme(), seed: int = 0
) -> tuple[DatasetManifest, DatasetManifest, DatasetManifest]:
    """Return ``(train, test, negative_pool)``.

    Positives: floor(fraction * n) to train, the rest to test.  Negatives:
    floor(fraction * n) to the pool, the rest to test.  Within each partition
    entries keep manifest order.
    """
    if len(manifest) == 0:
        raise InsufficientPositives("empty manifest")
    pos = [i for i, e in enumerate(manifest.entries) if e.condition_label is ConditionLabel.POSITIVE]
    neg = [i for i, e in enumerate(manifest.entries) if e.condition_label is ConditionLabel.NEGATIVE]
    if len(pos) < 2:
        raise InsufficientPositives(f"need at least 2 positives to split, got {len(pos)}")
    rng = np.random.default_rng(seed)
    pos_perm = [pos[i] for i in rng.permutation(len(pos))]
    neg_perm = [neg[i] for i in rng.permutation(len(neg))]
    n_pos_train = math.floor(scheme.positive_train_fraction * len(pos))
    n_pool = math.floor(scheme.negative_pool_fraction * len(neg))
    train_idx = sorted(pos_perm[:n_pos_train])
    pool_idx = sorted(neg_perm[:n_pool])
    test_idx = sorted(pos_perm[n_pos_train:] + neg_perm[n_pool:])
    pick = lambda idx: manifest.subset(manifest.entries[i] for i in idx)  # noqa: E731
    return pick(train_idx), pick(test_idx), pick(pool_idx)


def upper_lower_entropy(image: LabeledImage) -> tuple[float, float]:
    """Histogram entropy of the upper and lower halves of the whole-pole region."""
    from .detector.halves import shannon_entropy, split_halves

    box = image.boxes("whole_pole")[0].to_pixel_bounds()
    crop = image.pixels[int(box.y_min):int(box.y_max), int(box.x_min):int(box.x_max)]
    upper, lower = split_halves(crop)
    return shannon_entropy(upper), shannon_entropy(lower)
