"""Imbalanced binary classification: balanced negative resampling and class reweighting.

The reference scorer is a logistic-link linear model trained by full-batch
gradient descent on a class-weighted cross-entropy.  Two strategies sit on
top of it and are kept separate:

* resampling: keep the small positive set fixed, draw an equally sized
  negative subset from a large pool every loop, and keep training the same
  model (warm start) loop after loop;
* reweighting: train once on the imbalanced set with the minority class's
  loss scaled by the majority/minority count ratio.
"""

from __future__ import annotations

import csv
import hashlib
import io
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import expit

from . import artifacts
from .corpus import ConditionLabel
from .errors import InvalidCounts, InvalidImage, PoolExhausted, ShapeMismatch, SingleClassInput
from .metrics import auc

EPS = 1e-7
DEFAULT_STEP = 0.1
HIST_BINS = 32
GRID = 8
FEATURE_LENGTH = HIST_BINS + GRID * GRID
CLASSIFIER_KIND = "classifier-model"


@dataclass(frozen=True)
class Sample:
    features: np.ndarray
    label: ConditionLabel
    source_id: str = ""

    @property
    def y(self) -> float:
        return 1.0 if self.label is ConditionLabel.POSITIVE else 0.0


@dataclass(frozen=True)
class ClassWeights:
    w_pos: float
    w_neg: float

    def __post_init__(self):
        if not (self.w_pos > 0 and self.w_neg > 0):
            raise InvalidCounts(f"class weights must be positive, got {self.w_pos}, {self.w_neg}")

    def scaled(self, c: float) -> "ClassWeights":
        return ClassWeights(self.w_pos * c, self.w_neg * c)


UNIT_WEIGHTS = ClassWeights(1.0, 1.0)


@dataclass
class ClassifierModel:
    weights: np.ndarray
    bias: float = 0.0
    history: list[dict] = field(default_factory=list)

    @classmethod
    def fresh(cls, n_features: int) -> "ClassifierModel":
        return cls(np.zeros(n_features), 0.0, [])

    @property
    def n_features(self) -> int:
        return len(self.weights)

    def copy(self) -> "ClassifierModel":
        return ClassifierModel(self.weights.copy(), float(self.bias), [dict(h) for h in self.history])

    def to_payload(self) -> dict:
        return {
            "bias": float(self.bias),
            "history": self.history,
            "weights": [float(v) for v in self.weights],
        }

    @classmethod
    def from_payload(cls, p: dict) -> "ClassifierModel":
        return cls(np.asarray(p["weights"], dtype=np.float64), float(p["bias"]), list(p["history"]))

    def to_bytes(self) -> bytes:
        return artifacts.dumps(CLASSIFIER_KIND, self.to_payload())

    def digest(self) -> str:
        return hashlib.sha256(self.to_bytes()).hexdigest()

    def save(self, path) -> str:
        return artifacts.write(path, CLASSIFIER_KIND, self.to_payload())

    @classmethod
    def load(cls, path) -> "ClassifierModel":
        return cls.from_payload(artifacts.read(path, CLASSIFIER_KIND)[1])


def extract_features(crop) -> np.ndarray:
    """32-bin L1-normalised intensity histogram followed by an 8x8 mean-pooled grid (length 96)."""
    arr = np.asarray(crop)
    if arr.ndim != 2 or arr.size == 0:
        raise InvalidImage(f"expected a non-empty 2-D crop, got shape {arr.shape}")
    if arr.dtype == np.uint8:
        arr = arr.astype(np.float64) / 255.0
    arr = np.clip(arr.astype(np.float64), 0.0, 1.0)
    bins = np.minimum((arr * HIST_BINS).astype(np.int64), HIST_BINS - 1)
    hist = np.bincount(bins.ravel(), minlength=HIST_BINS) / arr.size
    h, w = arr.shape
    # cell boundaries by proportional split; tiny crops repeat rows/columns
    ry = np.floor(np.arange(GRID + 1) * h / GRID).astype(int)
    rx = np.floor(np.arange(GRID + 1) * w / GRID).astype(int)
    grid = np.empty((GRID, GRID))
    for i in range(GRID):
        y0, y1 = ry[i], max(ry[i + 1], ry[i] + 1)
        y0 = min(y0, h - 1)
        for j in range(GRID):
            x0, x1 = rx[j], max(rx[j + 1], rx[j] + 1)
            x0 = min(x0, w - 1)
            grid[i, j] = arr[y0:y1, x0:x1].mean()
    return np.concatenate([hist, grid.ravel()])


def class_weights(n_pos: int, n_neg: int) -> ClassWeights:
    """Inverse-frequency weights with the majority class at 1."""
    if n_pos < 1 or n_neg < 1:
        raise InvalidCounts(f"both class counts must be >= 1, got {n_pos}, {n_neg}")
    if n_pos <= n_neg:
        return ClassWeights(n_neg / n_pos, 1.0)
    return ClassWeights(1.0, n_pos / n_neg)


def _arrays(samples: Sequence[Sample]) -> tuple[np.ndarray, np.ndarray]:
    if not samples:
        return np.zeros((0, 0)), np.zeros(0)
    lengths = {len(s.features) for s in samples}
    if len(lengths) != 1:
        raise ShapeMismatch(f"inconsistent feature lengths {sorted(lengths)}")
    X = np.vstack([np.asarray(s.features, dtype=np.float64) for s in samples])
    y = np.array([s.y for s in samples])
    return X, y


def _labels01(labels) -> np.ndarray:
    out = []
    for lab in labels:
        if isinstance(lab, ConditionLabel):
            out.append(1.0 if lab.is_positive else 0.0)
        elif isinstance(lab, str):
            out.append(1.0 if lab.upper() == "POSITIVE" else 0.0)
        else:
            out.append(1.0 if lab else 0.0)
    return np.asarray(out)


def weighted_loss(scores, labels, weights: ClassWeights) -> float:
    """Mean over samples of w(label) * cross-entropy, scores clamped to [eps, 1 - eps]."""
    s = np.asarray(scores, dtype=np.float64)
    y = _labels01(labels)
    if s.shape != y.shape:
        raise ShapeMismatch(f"scores {s.shape} vs labels {y.shape}")
    if s.size == 0:
        return 0.0
    s = np.clip(s, EPS, 1.0 - EPS)
    w = np.where(y == 1.0, weights.w_pos, weights.w_neg)
    ce = np.where(y == 1.0, -np.log(s), -np.log1p(-s))
    return float(np.mean(w * ce))


def loss_and_gradient(weights_vec: np.ndarray, bias: float, X: np.ndarray, y: np.ndarray, cw: ClassWeights):
    """Weighted loss and its gradient w.r.t. (weights, bias)."""
    z = X @ weights_vec + bias
    s = expit(z)
    loss = weighted_loss(s, y, cw)
    w = np.where(y == 1.0, cw.w_pos, cw.w_neg)
    inside = (s > EPS) & (s < 1.0 - EPS)
    g = np.where(inside, w * (s - y), 0.0) / len(y)
    return loss, X.T @ g, float(g.sum())


def _sample_digest(samples: Sequence[Sample]) -> str:
    h = hashlib.sha256()
    for s in samples:
        h.update(s.source_id.encode())
        h.update(b"\0")
    return h.hexdigest()[:16]


def train_classifier(
    samples: Sequence[Sample],
    weights: ClassWeights = UNIT_WEIGHTS,
    epochs: int = 100,
    seed: int = 0,
    init: ClassifierModel | None = None,
    step: float = DEFAULT_STEP,
) -> ClassifierModel:
    """Full-batch gradient descent on :func:`weighted_loss`.

    ``init=None`` starts from zero parameters; otherwise training continues
    from a copy of ``init``.  ``seed`` is recorded only: full-batch descent
    has no randomness.
    """
    X, y = _arrays(samples)
    if len(y) == 0 or y.min() == y.max():
        raise SingleClassInput("training needs both POSITIVE and NEGATIVE samples")
    model = ClassifierModel.fresh(X.shape[1]) if init is None else init.copy()
    if model.n_features != X.shape[1]:
        raise ShapeMismatch(f"model has {model.n_features} features, samples have {X.shape[1]}")
    w, b = model.weights, model.bias
    losses = []
    for _ in range(int(epochs)):
        loss, gw, gb = loss_and_gradient(w, b, X, y, weights)
        losses.append(loss)
        w = w - step * gw
        b = b - step * gb
    final = weighted_loss(expit(X @ w + b), y, weights)
    model.weights, model.bias = w, float(b)
    model.history.append({
        "epochs": int(epochs),
        "final_loss": final,
        "initial_loss": losses[0] if losses else final,
        "n_negative": int((y == 0).sum()),
        "n_positive": int((y == 1).sum()),
        "sample_digest": _sample_digest(samples),
        "seed": int(seed),
        "w_neg": float(weights.w_neg),
        "w_pos": float(weights.w_pos),
    })
    return model


def score(model: ClassifierModel, sample) -> float:
    x = np.asarray(getattr(sample, "features", sample), dtype=np.float64)
    if x.shape != (model.n_features,):
        raise ShapeMismatch(f"expected {model.n_features} features, got shape {x.shape}")
    return float(expit(np.dot(model.weights, x) + model.bias))


def score_many(model: ClassifierModel, samples: Sequence[Sample]) -> np.ndarray:
    X, _ = _arrays(samples)
    if X.shape[1] != model.n_features:
        raise ShapeMismatch(f"expected {model.n_features} features, got {X.shape[1]}")
    return expit(X @ model.weights + model.bias)


def sample_balanced_negatives(pool: Sequence[Sample], n: int, loop_index: int, seed: int) -> list[Sample]:
    """Uniform draw of ``n`` pool members without replacement, keyed by (seed, loop_index).

    Draws for different loops are independent, so a negative can reappear in
    a later loop.  The subset keeps pool order.
    """
    if n > len(pool):
        raise PoolExhausted(f"asked for {n} negatives from a pool of {len(pool)}")
    rng = np.random.default_rng([int(seed), int(loop_index)])
    idx = np.sort(rng.choice(len(pool), size=n, replace=False))
    return [pool[i] for i in idx]


@dataclass(frozen=True)
class ResamplingConfig:
    loops: int = 5
    epochs_per_loop: int = 100
    seed: int = 0
    warm_start: bool = True
    step: float = DEFAULT_STEP

    def __post_init__(self):
        if self.loops < 1:
            raise ValueError("loops must be >= 1")


@dataclass(frozen=True)
class LoopRecord:
    loop_index: int
    n_train_pos: int
    n_train_neg: int
    auc: float


def evaluate_auc(model: ClassifierModel, test: Sequence[Sample]) -> float:
    return auc(score_many(model, test), [s.label for s in test])


def resampling_train(
    positives: Sequence[Sample],
    pool: Sequence[Sample],
    test: Sequence[Sample],
    config: ResamplingConfig = ResamplingConfig(),
) -> tuple[ClassifierModel, list[LoopRecord]]:
    """Loop: draw |positives| negatives, train (warm-started), record test AUC."""
    if len(pool) < len(positives):
        raise PoolExhausted(f"pool of {len(pool)} smaller than {len(positives)} positives")
    model = None
    history = []
    for loop in range(1, config.loops + 1):
        negatives = sample_balanced_negatives(pool, len(positives), loop, config.seed)
        init = model if config.warm_start else None
        model = train_classifier(list(positives) + negatives, UNIT_WEIGHTS, config.epochs_per_loop,
                                 config.seed, init, config.step)
        history.append(LoopRecord(loop, len(positives), len(negatives), evaluate_auc(model, test)))
    return model, history


def history_csv(history: Sequence[LoopRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["loop_index", "n_train_pos", "n_train_neg", "auc"])
    for r in history:
        writer.writerow([r.loop_index, r.n_train_pos, r.n_train_neg, repr(float(r.auc))])
    return buf.getvalue()


@dataclass(frozen=True)
class SweepRow:
    ratio: int
    n_train_pos: int
    n_train_neg: int
    n_test_pos: int
    n_test_neg: int
    baseline_auc: float
    reweighted_auc: float


def reweighting_sweep(
    positives: Sequence[Sample],
    negatives: Sequence[Sample],
    test_positives: Sequence[Sample],
    test_negatives: Sequence[Sample],
    ratios: Sequence[int] = (1, 3, 6, 12),
    epochs: int = 100,
    seed: int = 0,
    step: float = DEFAULT_STEP,
    test_fraction: float = 0.2,
) -> list[SweepRow]:
    """Baseline vs inverse-frequency reweighting at increasing imbalance.

    At ratio ``r`` the training set is every positive plus ``r * |positives|``
    negatives; the test set has ``test_fraction`` of the training set's size at
    the same class ratio.  Both arms see identical data.
    """
    rows = []
    n_pos = len(positives)
    for r in ratios:
        n_neg = r * n_pos
        train_neg = sample_balanced_negatives(negatives, n_neg, r, seed)
        n_test_pos = max(1, round(test_fraction * n_pos))
        n_test_neg = max(1, round(test_fraction * n_neg))
        test = (sample_balanced_negatives(test_positives, n_test_pos, r, seed + 1)
                + sample_balanced_negatives(test_negatives, n_test_neg, r, seed + 2))
        train = list(positives) + train_neg
        base = train_classifier(train, UNIT_WEIGHTS, epochs, seed, None, step)
        rew = train_classifier(train, class_weights(n_pos, n_neg), epochs, seed, None, step)
        rows.append(SweepRow(int(r), n_pos, n_neg, n_test_pos, n_test_neg,
                             evaluate_auc(base, test), evaluate_auc(rew, test)))
    return rows


def sweep_csv(rows: Sequence[SweepRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["ratio", "n_train_pos", "n_train_neg", "n_test_pos", "n_test_neg", "baseline_auc", "reweighted_auc"])
    for r in rows:
        writer.writerow([r.ratio, r.n_train_pos, r.n_train_neg, r.n_test_pos, r.n_test_neg,
                         repr(float(r.baseline_auc)), repr(float(r.reweighted_auc))])
    return buf.getvalue()
