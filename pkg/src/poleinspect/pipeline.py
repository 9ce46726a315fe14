"""End-to-end run: corpus -> detectors -> cascade evaluation -> cap crops -> classifier experiments.

Every stage reads its inputs from, and writes its outputs to, the run's output
directory, so stages can be run one at a time or all together.  Reports
depend only on the config, never on wall-clock time or absolute paths.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Callable

import numpy as np
import yaml

from . import __version__, artifacts
from .capcrops import annotation_samples, cascade_samples
from .corpus import (
    ConditionLabel,
    DatasetManifest,
    ImbalanceConfig,
    SceneParams,
    SplitScheme,
    generate_corpus,
    split_dataset,
)
from .detector.backend import BackendSpec, DetectorModel, default_backend, detect, train_detector
from .detector.cascade import zoom_in_detect
from .detector.nms import Detection
from .detector.zoom import CascadeConfig
from .errors import InvalidParams, PoleInspectError, StageError
from .geometry import BoundingBox
from .imbalance import (
    DEFAULT_STEP,
    ResamplingConfig,
    Sample,
    class_weights,
    history_csv,
    resampling_train,
    reweighting_sweep,
    score_many,
    sweep_csv,
    train_classifier,
)
from .metrics import COCO_IOU_THRESHOLDS, EvaluationReport, ReportSection, ap_by_iou, classification_section
from .report import ReportFormat, emit_report

log = logging.getLogger(__name__)

CONFIG_EXIT_CODE = 2
STAGES = (
    "generate",
    "split",
    "train-detector",
    "detect",
    "evaluate-detection",
    "crop-caps",
    "train-classifier",
    "resample-train",
    "reweight-sweep",
)
EXIT_CODES = {name: 10 + i for i, name in enumerate(STAGES)}
EXPERIMENTS = ("resampling", "reweighting")
SEED_KEYS = ("corpus", "split", "detector", "classifier")
MANIFEST_NAME = "run_manifest.json"


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class Seeds:
    corpus: int
    split: int
    detector: int
    classifier: int


@dataclass(frozen=True)
class DetectorSettings:
    stage1: BackendSpec = field(default_factory=lambda: default_backend("whole_pole"))
    stage2: BackendSpec = field(default_factory=lambda: default_backend("pole_cap"))
    single: BackendSpec = field(default_factory=lambda: default_backend("pole_cap"))
    single_threshold: float = 0.05


@dataclass(frozen=True)
class ClassifierSettings:
    crop_source: str = "cascade"
    jitter_px: float = 3.0
    epochs: int = 100
    step: float = DEFAULT_STEP
    experiments: tuple[str, ...] = EXPERIMENTS
    loops: int = 5
    epochs_per_loop: int = 100
    warm_start: bool = True
    ratios: tuple[int, ...] = (1, 3, 6, 12)
    sweep_epochs: int = 100
    test_fraction: float = 0.2
    max_positives: int | None = None


@dataclass(frozen=True)
class PipelineConfig:
    seeds: Seeds
    corpus: ImbalanceConfig
    scene: SceneParams = SceneParams()
    split: SplitScheme = SplitScheme()
    detector: DetectorSettings = DetectorSettings()
    cascade: CascadeConfig = CascadeConfig()
    classifier: ClassifierSettings = ClassifierSettings()
    report_formats: tuple[ReportFormat, ...] = (ReportFormat.CSV, ReportFormat.TEXT)
    output_dir: Path | None = None
    stages: tuple[str, ...] | None = None

    def to_dict(self) -> dict:
        """Everything that affects results (the output directory does not)."""
        c = self.classifier
        return {
            "seeds": {k: getattr(self.seeds, k) for k in SEED_KEYS},
            "corpus": {
                "n_positive": self.corpus.n_positive,
                "ratio": self.corpus.ratio,
                "preset": self.corpus.class_counts_preset,
                "scene": {k: v for k, v in self.scene.to_dict().items() if k != "cap_present"},
            },
            "split": {
                "positive_train_fraction": self.split.positive_train_fraction,
                "negative_pool_fraction": self.split.negative_pool_fraction,
            },
            "detector": {
                "stage1": self.detector.stage1.to_dict(),
                "stage2": self.detector.stage2.to_dict(),
                "single": self.detector.single.to_dict(),
                "single_threshold": self.detector.single_threshold,
            },
            "cascade": self.cascade.to_dict(),
            "classifier": {
                "crop_source": c.crop_source,
                "jitter_px": c.jitter_px,
                "epochs": c.epochs,
                "step": c.step,
                "experiments": list(c.experiments),
                "resampling": {"loops": c.loops, "epochs_per_loop": c.epochs_per_loop, "warm_start": c.warm_start},
                "reweighting": {
                    "ratios": list(c.ratios),
                    "epochs": c.sweep_epochs,
                    "test_fraction": c.test_fraction,
                    "max_positives": c.max_positives,
                },
            },
            "report": {"formats": [f.value for f in self.report_formats]},
            "stages": None if self.stages is None else list(self.stages),
        }

    def digest(self) -> str:
        return artifacts.sha256_bytes(artifacts.canonical_json(self.to_dict()).encode())

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        try:
            return _parse_config(d)
        except InvalidParams:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidParams(f"bad config: {exc}") from exc

    @classmethod
    def from_yaml(cls, path: str | Path) -> "PipelineConfig":
        try:
            data = yaml.safe_load(Path(path).read_text())
        except (OSError, yaml.YAMLError) as exc:
            raise InvalidParams(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(data or {})


def _take(d: dict | None, where: str, allowed: tuple[str, ...]) -> dict:
    d = {} if d is None else d
    if not isinstance(d, dict):
        raise InvalidParams(f"{where} must be a mapping")
    unknown = sorted(set(d) - set(allowed))
    if unknown:
        raise InvalidParams(f"unknown keys in {where}: {unknown}")
    return dict(d)


def _backend(target: str, overrides: dict | None, where: str) -> BackendSpec:
    names = tuple(f.name for f in fields(BackendSpec))
    o = _take(overrides, where, names)
    if "cells" in o:
        o["cells"] = tuple(int(v) for v in o["cells"])
    return default_backend(target, **o)


def _parse_config(d: dict) -> PipelineConfig:
    d = _take(d, "config", ("seeds", "corpus", "split", "detector", "cascade", "classifier", "report", "output_dir",
                          "stages"))
    seeds_raw = _take(d.get("seeds"), "seeds", SEED_KEYS)
    missing = [k for k in SEED_KEYS if seeds_raw.get(k) is None]
    if missing:
        raise InvalidParams(f"seeds must be explicit; missing {missing}")
    for k in SEED_KEYS:
        if isinstance(seeds_raw[k], bool) or not isinstance(seeds_raw[k], int):
            raise InvalidParams(f"seed {k!r} must be an integer")
    seeds = Seeds(**seeds_raw)

    corpus = _take(d.get("corpus"), "corpus", ("n_positive", "ratio", "preset", "scene"))
    if "n_positive" not in corpus:
        raise InvalidParams("corpus.n_positive is required")
    if corpus.get("preset") is not None:
        if corpus.get("ratio") is not None:
            raise InvalidParams("give either corpus.ratio or corpus.preset, not both")
        imbalance = ImbalanceConfig.from_preset(corpus["preset"], int(corpus["n_positive"]))
    else:
        if corpus.get("ratio") is None:
            raise InvalidParams("corpus.ratio (or corpus.preset) is required")
        imbalance = ImbalanceConfig(int(corpus["n_positive"]), corpus["ratio"])
    scene_keys = ("extent", "pole_width_fraction", "cap_size_px", "clutter_density", "noise_sigma")
    scene = SceneParams.from_dict(_take(corpus.get("scene"), "corpus.scene", scene_keys))
    scene.validate()

    split = SplitScheme(**_take(d.get("split"), "split", ("positive_train_fraction", "negative_pool_fraction")))

    det = _take(d.get("detector"), "detector", ("stage1", "stage2", "single", "single_threshold"))
    detector = DetectorSettings(
        _backend("whole_pole", det.get("stage1"), "detector.stage1"),
        _backend("pole_cap", det.get("stage2"), "detector.stage2"),
        _backend("pole_cap", det.get("single"), "detector.single"),
        float(det.get("single_threshold", 0.05)),
    )
    cascade = CascadeConfig.from_dict(_take(d.get("cascade"), "cascade", tuple(CascadeConfig().to_dict())))

    c = _take(d.get("classifier"), "classifier",
              ("crop_source", "jitter_px", "epochs", "step", "experiments", "resampling", "reweighting"))
    rs = _take(c.get("resampling"), "classifier.resampling", ("loops", "epochs_per_loop", "warm_start"))
    rw = _take(c.get("reweighting"), "classifier.reweighting", ("ratios", "epochs", "test_fraction", "max_positives"))
    base = ClassifierSettings()
    experiments = tuple(c.get("experiments", base.experiments))
    if any(e not in EXPERIMENTS for e in experiments):
        raise InvalidParams(f"classifier.experiments must be drawn from {EXPERIMENTS}")
    if c.get("crop_source", base.crop_source) not in ("cascade", "annotation"):
        raise InvalidParams("classifier.crop_source must be 'cascade' or 'annotation'")
    classifier = ClassifierSettings(
        crop_source=c.get("crop_source", base.crop_source),
        jitter_px=float(c.get("jitter_px", base.jitter_px)),
        epochs=int(c.get("epochs", base.epochs)),
        step=float(c.get("step", base.step)),
        experiments=experiments,
        loops=int(rs.get("loops", base.loops)),
        epochs_per_loop=int(rs.get("epochs_per_loop", base.epochs_per_loop)),
        warm_start=bool(rs.get("warm_start", base.warm_start)),
        ratios=tuple(int(r) for r in rw.get("ratios", base.ratios)),
        sweep_epochs=int(rw.get("epochs", base.sweep_epochs)),
        test_fraction=float(rw.get("test_fraction", base.test_fraction)),
        max_positives=None if rw.get("max_positives") is None else int(rw["max_positives"]),
    )
    if classifier.loops < 1 or classifier.epochs < 1 or any(r < 1 for r in classifier.ratios):
        raise InvalidParams("loops, epochs and ratios must be positive")

    rep = _take(d.get("report"), "report", ("formats",))
    formats = tuple(ReportFormat(f) for f in rep.get("formats", ("CSV", "TEXT")))
    stages = d.get("stages")
    if stages is not None:
        stages = tuple(stages)
        bad = [x for x in stages if x not in STAGES]
        if bad or not stages:
            raise InvalidParams(f"stages must be a non-empty list drawn from {STAGES}; got {bad or 'nothing'}")
    out = d.get("output_dir")
    return PipelineConfig(seeds, imbalance, scene, split, detector, cascade, classifier, formats,
                          None if out is None else Path(out), stages)


# ---------------------------------------------------------------------------
# run manifest


@dataclass
class RunManifest:
    config_digest: str
    tool_version: str = __version__
    artifacts: dict[str, dict] = field(default_factory=dict)
    timings: dict[str, float] = field(default_factory=dict)
    completed_stages: list[str] = field(default_factory=list)
    status: str = "running"
    failed_stage: str | None = None
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "artifacts": self.artifacts,
            "completed_stages": self.completed_stages,
            "config_digest": self.config_digest,
            "error": self.error,
            "failed_stage": self.failed_stage,
            "status": self.status,
            "timings": self.timings,
            "tool_version": self.tool_version,
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "RunManifest":
        d = json.loads(Path(path).read_text())
        return cls(d["config_digest"], d["tool_version"], d["artifacts"], d["timings"], d["completed_stages"],
                   d["status"], d.get("failed_stage"), d.get("error"))

    def missing(self, root: str | Path) -> list[str]:
        """Names of listed artifacts that are absent or changed on disk."""
        root = Path(root)
        bad = []
        for name, a in self.artifacts.items():
            p = root / a["path"]
            if not p.exists() or artifacts.file_digest(p) != a["sha256"]:
                bad.append(name)
        return bad


# ---------------------------------------------------------------------------
# stage context and file layout


@dataclass
class RunContext:
    config: PipelineConfig
    out: Path
    manifest: RunManifest
    verbose: bool = False

    def path(self, *parts: str) -> Path:
        p = self.out.joinpath(*parts)
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def record(self, name: str, path: Path, kind: str) -> None:
        self.manifest.artifacts[name] = {
            "kind": kind,
            "path": path.relative_to(self.out).as_posix(),
            "sha256": artifacts.file_digest(path),
        }

    def base_metadata(self) -> dict[str, str]:
        return {
            "config_digest": self.config.digest(),
            "seeds": json.dumps(self.config.to_dict()["seeds"], sort_keys=True),
            "tool_version": __version__,
        }

    def emit(self, name: str, report: EvaluationReport) -> None:
        for fmt in self.config.report_formats:
            suffix = ".csv" if fmt is ReportFormat.CSV else ".txt"
            written = emit_report(report, fmt, self.path("reports", name + suffix))
            self.record(f"report_{name}_{fmt.value.lower()}", written[0], "report")
            if len(written) > 1:
                self.record(f"report_{name}_roc", written[1], "plot-data")


CORPUS_MANIFEST = ("corpus", "manifest.jsonl")
SPLITS = {name: ("splits", f"{name}.jsonl") for name in ("train", "test", "pool")}
MODELS = {
    "stage1": ("models", "stage1_whole_pole.model"),
    "stage2": ("models", "stage2_pole_cap.model"),
    "single": ("models", "single_stage_pole_cap.model"),
    "classifier": ("models", "classifier.model"),
    "resampled": ("models", "classifier_resampled.model"),
}
DETECTIONS = {name: ("detections", f"{name}.jsonl") for name in ("single", "cascade", "stage1")}
SAMPLES = ("samples", "cap_samples.jsonl")
PRODUCER = {"corpus": "generate", "splits": "split", "models": "train-detector", "detections": "detect",
            "samples": "crop-caps"}


def _require(ctx: RunContext, parts: tuple[str, ...]) -> Path:
    p = ctx.out.joinpath(*parts)
    if not p.exists():
        raise FileNotFoundError(f"{p} is missing; run the {PRODUCER.get(parts[0], 'upstream')} stage first")
    return p


def _load_split(ctx: RunContext, name: str) -> DatasetManifest:
    return DatasetManifest.load(_require(ctx, SPLITS[name]))


def _merge(a: DatasetManifest, b: DatasetManifest) -> DatasetManifest:
    return a.subset(sorted(a.entries + b.entries, key=lambda e: e.source_id))


# ---------------------------------------------------------------------------
# stages


def stage_generate(ctx: RunContext) -> None:
    cfg = ctx.config
    m = generate_corpus(cfg.corpus, cfg.scene, cfg.seeds.corpus, ctx.path("corpus"))
    ctx.record("corpus_manifest", ctx.out.joinpath(*CORPUS_MANIFEST), "manifest")
    log.info("generated %d scenes (%d positive)", len(m), len(m.positives()))


def stage_split(ctx: RunContext) -> None:
    m = DatasetManifest.load(_require(ctx, CORPUS_MANIFEST))
    parts = split_dataset(m, ctx.config.split, ctx.config.seeds.split)
    for name, part in zip(("train", "test", "pool"), parts):
        p = ctx.path(*SPLITS[name])
        part.save(p)
        ctx.record(f"split_{name}", p, "manifest")
    log.info("split: train %d, test %d, pool %d", *(len(p) for p in parts))


def stage_train_detector(ctx: RunContext) -> None:
    cfg = ctx.config
    # detectors learn from every scene outside the held-out test split
    data = _merge(_load_split(ctx, "train"), _load_split(ctx, "pool"))
    seed = cfg.seeds.detector
    jobs = (
        ("stage1", "whole_pole", cfg.detector.stage1, None),
        ("stage2", "pole_cap", cfg.detector.stage2, cfg.cascade),
        ("single", "pole_cap", cfg.detector.single, None),
    )
    for name, target, spec, zoom_cfg in jobs:
        t0 = time.perf_counter()
        model = train_detector(data, target, spec, seed, zoom_cfg)
        p = ctx.path(*MODELS[name])
        model.save(p)
        ctx.record(f"detector_{name}", p, "detector-model")
        log.info("trained %s detector in %.1fs", name, time.perf_counter() - t0)


def _det_records(dets: list[Detection]) -> list[list[float]]:
    return [[*d.box.as_tuple(), d.confidence] for d in dets]


def _write_jsonl(path: Path, records: list[dict]) -> None:
    path.write_text("".join(json.dumps(r, sort_keys=True) + "\n" for r in records))


def _read_jsonl(path: Path) -> list[dict]:
    return [json.loads(line) for line in path.read_text().splitlines() if line.strip()]


def stage_detect(ctx: RunContext) -> None:
    cfg = ctx.config
    test = _load_split(ctx, "test")
    s1 = DetectorModel.load(_require(ctx, MODELS["stage1"]))
    s2 = DetectorModel.load(_require(ctx, MODELS["stage2"]))
    single = DetectorModel.load(_require(ctx, MODELS["single"]))
    out = {k: [] for k in DETECTIONS}
    diag_lines = []
    for e in test:
        raster = test.load_image(e).raster
        out["single"].append({"source_id": e.source_id,
                              "detections": _det_records(detect(single, raster, cfg.detector.single_threshold))})
        dets, diag = zoom_in_detect(s1, s2, raster, cfg.cascade)
        out["cascade"].append({"source_id": e.source_id, "cascade_miss": diag.cascade_miss,
                               "detections": _det_records(dets)})
        out["stage1"].append({"source_id": e.source_id,
                              "detections": _det_records([r.stage1 for r in diag.regions])})
        for line in diag.to_lines():
            tagged = json.dumps({"source_id": e.source_id, **json.loads(line)}, sort_keys=True)
            diag_lines.append(tagged)
            log.debug("%s", tagged)
    for name, records in out.items():
        p = ctx.path(*DETECTIONS[name])
        _write_jsonl(p, records)
        ctx.record(f"detections_{name}", p, "detections")
    if ctx.verbose:
        p = ctx.path("detections", "cascade_diagnostics.jsonl")
        p.write_text("".join(line + "\n" for line in diag_lines))
        ctx.record("detections_diagnostics", p, "diagnostics")


def _boxes(records: list[list[float]], class_name: str) -> list[Detection]:
    return [Detection(BoundingBox(*r[:4]), class_name, r[4]) for r in records]


def detection_report(ctx: RunContext) -> EvaluationReport:
    test = _load_split(ctx, "test")
    gt_cap = [e.boxes("pole_cap") for e in test]
    gt_pole = [e.boxes("whole_pole") for e in test]
    loaded = {k: _read_jsonl(_require(ctx, DETECTIONS[k])) for k in DETECTIONS}
    for k, recs in loaded.items():
        if [r["source_id"] for r in recs] != [e.source_id for e in test]:
            raise ValueError(f"{k} detections do not match the test split")
    report = EvaluationReport("Detection: single-stage vs two-stage zoom-in cascade")
    report.metadata = {
        **ctx.base_metadata(),
        "n_test_images": str(len(test)),
        "n_test_caps": str(sum(len(g) for g in gt_cap)),
        "test_digest": test.digest(),
    }
    report.sections["single_stage"] = ReportSection(
        ap_by_iou(_per_image(loaded["single"], "pole_cap"), gt_cap, COCO_IOU_THRESHOLDS))
    cascade = ReportSection(ap_by_iou(_per_image(loaded["cascade"], "pole_cap"), gt_cap, COCO_IOU_THRESHOLDS))
    cascade.counts = {"cascade_miss": sum(bool(r["cascade_miss"]) for r in loaded["cascade"]),
                      "n_images": len(test)}
    report.sections["cascade"] = cascade
    report.sections["stage1_whole_pole"] = ReportSection(
        ap_by_iou(_per_image(loaded["stage1"], "whole_pole"), gt_pole, COCO_IOU_THRESHOLDS))
    return report


def _per_image(records: list[dict], class_name: str) -> list[list[Detection]]:
    return [_boxes(r["detections"], class_name) for r in records]


def stage_evaluate_detection(ctx: RunContext) -> None:
    ctx.emit("detection", detection_report(ctx))


def stage_crop_caps(ctx: RunContext) -> None:
    cfg = ctx.config
    parts = {name: _load_split(ctx, name) for name in ("train", "test", "pool")}
    cap = cfg.scene.cap_size_px
    records, misses = [], []
    for name, m in parts.items():
        if cfg.classifier.crop_source == "annotation":
            samples = annotation_samples(m, cap, cfg.seeds.classifier, cfg.classifier.jitter_px)
        else:
            s1 = DetectorModel.load(_require(ctx, MODELS["stage1"]))
            s2 = DetectorModel.load(_require(ctx, MODELS["stage2"]))
            res = cascade_samples(m, s1, s2, cfg.cascade, cap)
            samples = res.samples
            misses += [{"partition": name, "source_id": sid} for sid in res.cascade_misses]
        for s in samples:
            records.append({"features": [float(v) for v in s.features], "label": s.label.value,
                            "partition": name, "source_id": s.source_id})
    records.sort(key=lambda r: r["source_id"])
    misses.sort(key=lambda r: r["source_id"])
    header = {"cascade_misses": misses, "crop_source": cfg.classifier.crop_source, "n_samples": len(records)}
    p = ctx.path(*SAMPLES)
    _write_jsonl(p, [header] + records)
    ctx.record("cap_samples", p, "samples")
    log.info("cap crops: %d samples, %d cascade misses", len(records), len(misses))


@dataclass
class SampleSet:
    train: list[Sample]
    test: list[Sample]
    pool: list[Sample]
    cascade_misses: list[dict]

    @property
    def positives(self) -> list[Sample]:
        return [s for s in self.train if s.label.is_positive]


def load_samples(path: str | Path) -> SampleSet:
    header, *records = _read_jsonl(Path(path))
    parts = {"train": [], "test": [], "pool": []}
    for r in records:
        parts[r["partition"]].append(Sample(np.asarray(r["features"]), ConditionLabel(r["label"]), r["source_id"]))
    return SampleSet(parts["train"], parts["test"], parts["pool"], header["cascade_misses"])


def _crop_counts(s: SampleSet) -> dict[str, int]:
    return {"cascade_miss": len(s.cascade_misses), "n_pool": len(s.pool),
            "n_test": len(s.test), "n_train_positive": len(s.positives)}


def stage_train_classifier(ctx: RunContext) -> None:
    cfg = ctx.config.classifier
    s = load_samples(_require(ctx, SAMPLES))
    cw = class_weights(len(s.positives), len(s.pool))
    model = train_classifier(s.positives + s.pool, cw, cfg.epochs, ctx.config.seeds.classifier, None, cfg.step)
    p = ctx.path(*MODELS["classifier"])
    model.save(p)
    ctx.record("classifier", p, "classifier-model")
    report = EvaluationReport("Condition classifier: reweighted loss on the full negative pool")
    report.metadata = {**ctx.base_metadata(), "crop_source": cfg.crop_source, "model_digest": model.digest()}
    report.sections["classifier"] = classification_section(score_many(model, s.test), [x.label for x in s.test])
    report.section("crop_caps").counts = _crop_counts(s)
    ctx.emit("classifier", report)


def stage_resample_train(ctx: RunContext) -> None:
    cfg = ctx.config.classifier
    s = load_samples(_require(ctx, SAMPLES))
    rc = ResamplingConfig(cfg.loops, cfg.epochs_per_loop, ctx.config.seeds.classifier, cfg.warm_start, cfg.step)
    model, history = resampling_train(s.positives, s.pool, s.test, rc)
    p = ctx.path(*MODELS["resampled"])
    model.save(p)
    ctx.record("classifier_resampled", p, "classifier-model")
    hp = ctx.path("reports", "resampling_history.csv")
    hp.write_text(history_csv(history))
    ctx.record("resampling_history", hp, "plot-data")
    report = EvaluationReport("Condition classifier: balanced negative resampling")
    report.metadata = {**ctx.base_metadata(), "crop_source": cfg.crop_source, "loops": str(cfg.loops),
                       "model_digest": model.digest()}
    report.sections["resampling"] = classification_section(
        score_many(model, s.test), [x.label for x in s.test], [h.auc for h in history])
    report.section("crop_caps").counts = _crop_counts(s)
    ctx.emit("resampling", report)


def stage_reweight_sweep(ctx: RunContext) -> None:
    cfg = ctx.config.classifier
    s = load_samples(_require(ctx, SAMPLES))
    positives = s.positives if cfg.max_positives is None else s.positives[: cfg.max_positives]
    tp = [x for x in s.test if x.label.is_positive]
    tn = [x for x in s.test if not x.label.is_positive]
    rows = reweighting_sweep(positives, s.pool, tp, tn, cfg.ratios, cfg.sweep_epochs,
                             ctx.config.seeds.classifier, cfg.step, cfg.test_fraction)
    sp = ctx.path("reports", "reweighting_sweep.csv")
    sp.write_text(sweep_csv(rows))
    ctx.record("reweighting_sweep", sp, "plot-data")
    report = EvaluationReport("Condition classifier: baseline vs reweighted loss by imbalance ratio")
    report.metadata = {**ctx.base_metadata(), "crop_source": cfg.crop_source}
    for r in rows:
        counts = {"n_test_negative": r.n_test_neg, "n_test_positive": r.n_test_pos,
                  "n_train_negative": r.n_train_neg, "n_train_positive": r.n_train_pos}
        report.sections[f"baseline_ratio_{r.ratio}"] = ReportSection(auc=r.baseline_auc, counts=dict(counts))
        report.sections[f"reweighted_ratio_{r.ratio}"] = ReportSection(auc=r.reweighted_auc, counts=dict(counts))
    ctx.emit("reweighting", report)


STAGE_FUNCS: dict[str, Callable[[RunContext], None]] = {
    "generate": stage_generate,
    "split": stage_split,
    "train-detector": stage_train_detector,
    "detect": stage_detect,
    "evaluate-detection": stage_evaluate_detection,
    "crop-caps": stage_crop_caps,
    "train-classifier": stage_train_classifier,
    "resample-train": stage_resample_train,
    "reweight-sweep": stage_reweight_sweep,
}


def default_stages(config: PipelineConfig) -> list[str]:
    """Stages a full ``run`` executes: the config's explicit list, or all of them minus unselected experiments."""
    if config.stages is not None:
        return list(config.stages)
    skip = set()
    if "resampling" not in config.classifier.experiments:
        skip.add("resample-train")
    if "reweighting" not in config.classifier.experiments:
        skip.add("reweight-sweep")
    return [s for s in STAGES if s not in skip]


def _open_manifest(config: PipelineConfig, out: Path, fresh: bool) -> RunManifest:
    mp = out / MANIFEST_NAME
    if not fresh and mp.exists():
        m = RunManifest.load(mp)
        if m.config_digest == config.digest():
            m.status, m.failed_stage, m.error = "running", None, None
            return m
    return RunManifest(config.digest())


def run_stages(
    config: PipelineConfig,
    stages: list[str] | tuple[str, ...],
    out_dir: str | Path | None = None,
    verbose: bool = False,
    fresh: bool = False,
) -> RunManifest:
    """Run ``stages`` in order, updating ``out_dir/run_manifest.json`` after each one.

    A failing stage raises :class:`StageError` carrying the partial manifest,
    which is also written to disk with ``status: failed``.
    """
    unknown = [s for s in stages if s not in STAGE_FUNCS]
    if unknown:
        raise InvalidParams(f"unknown stages {unknown}")
    target = out_dir if out_dir is not None else config.output_dir
    if target is None or str(target) == "":
        raise InvalidParams("no output directory given")
    out = Path(target)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise InvalidParams(f"output directory {out} is not writable: {exc}") from exc
    out = out.resolve()
    manifest = _open_manifest(config, out, fresh)
    ctx = RunContext(config, out, manifest, verbose)
    for stage in stages:
        t0 = time.perf_counter()
        log.info("stage %s", stage)
        try:
            STAGE_FUNCS[stage](ctx)
        except (PoleInspectError, OSError, ValueError, KeyError) as exc:
            manifest.status, manifest.failed_stage, manifest.error = "failed", stage, f"{type(exc).__name__}: {exc}"
            manifest.save(out / MANIFEST_NAME)
            err = StageError(stage, EXIT_CODES[stage], exc)
            err.manifest = manifest
            raise err from exc
        manifest.timings[stage] = round(time.perf_counter() - t0, 3)
        if stage not in manifest.completed_stages:
            manifest.completed_stages.append(stage)
        manifest.save(out / MANIFEST_NAME)
    manifest.status = "complete"
    manifest.save(out / MANIFEST_NAME)
    return manifest


def run_pipeline(
    config: PipelineConfig, out_dir: str | Path | None = None, verbose: bool = False
) -> RunManifest:
    """Full run from scene generation to classifier reports."""
    return run_stages(config, default_stages(config), out_dir, verbose, fresh=True)
