"""Cross-validation, confusion-matrix accumulation, and latency metrics.

Confusion matrices are 4x4 with rows = predicted and columns = actual;
normalized exports scale each actual-class column to sum to 100 (rounded
to 2 decimals). Fold matrices sum entrywise into per-user matrices, which
sum into an overall matrix.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import GAZE_CLASSES, GazeClass, LabeledDataset

N = len(GAZE_CLASSES)


class ConfusionMatrix:
    def __init__(self, counts=None):
        if counts is None:
            self.counts = np.zeros((N, N), dtype=np.int64)
        else:
            self.counts = np.asarray(counts, dtype=np.int64).reshape(N, N).copy()
            if (self.counts < 0).any():
                raise ValueError("confusion counts must be >= 0")

    def add(self, predicted, actual, n: int = 1) -> None:
        self.counts[int(predicted), int(actual)] += n

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.counts + other.counts)

    def __eq__(self, other) -> bool:
        return isinstance(other, ConfusionMatrix) and bool((self.counts == other.counts).all())

    def accuracy(self) -> float:
        if self.total == 0:
            raise ValueError("empty confusion matrix")
        return float(np.trace(self.counts)) / self.total

    def normalized_percent(self) -> np.ndarray:
        """Percent of each actual class (column) assigned to each predicted
        class; columns sum to 100 within rounding."""
        col = self.counts.sum(axis=0, keepdims=True).astype(np.float64)
        with np.errstate(invalid="ignore", divide="ignore"):
            pct = np.where(col > 0, self.counts / col * 100.0, 0.0)
        return np.round(pct, 2)

    def to_rows(self) -> list:
        return [[int(v) for v in row] for row in self.counts]


def accuracy(cm: ConfusionMatrix) -> float:
    return cm.accuracy()


def _as_pairs(dataset):
    if isinstance(dataset, LabeledDataset):
        return [(it.frame, int(it.label)) for it in dataset.items]
    return [(x, int(label)) for x, label in dataset]


def stratified_folds(labels, k: int, seed: int = 0) -> list:
    """Disjoint covering folds, stratified within +-1 item per class."""
    labels = np.asarray(labels)
    if len(labels) < k:
        raise ValueError(f"need at least {k} items for {k} folds")
    rng = np.random.default_rng(seed)
    folds = [[] for _ in range(k)]
    for g in GAZE_CLASSES:
        idxs = np.nonzero(labels == int(g))[0]
        idxs = idxs[rng.permutation(len(idxs))]
        for pos, idx in enumerate(idxs):
            folds[pos % k].append(int(idx))
    return [np.array(sorted(f), dtype=np.int64) for f in folds]


def _evaluate(predict_fn, pairs, indices) -> ConfusionMatrix:
    cm = ConfusionMatrix()
    for i in indices:
        x, label = pairs[i]
        cm.add(int(predict_fn(x)), label)
    return cm


def crossvalidate(dataset, k: int = 5, trainer=None, seed: int = 0):
    """Each fold validates a model trained on the remaining folds.

    ``trainer`` maps a list of (item, label) pairs to a predict function
    (item -> class index). Returns (per-fold CMs, their entrywise sum).
    k=1 degenerates to a single stratified 80/20 holdout.
    """
    if trainer is None:
        raise ValueError("a trainer is required")
    pairs = _as_pairs(dataset)
    labels = [label for _, label in pairs]
    if k == 1:
        folds = stratified_folds(labels, 5, seed)
        val = folds[0]
        train_idx = np.array(sorted(set(range(len(pairs))) - set(val.tolist())), dtype=np.int64)
        predict_fn = trainer([pairs[i] for i in train_idx])
        cm = _evaluate(predict_fn, pairs, val)
        return [cm], cm
    folds = stratified_folds(labels, k, seed)
    fold_cms = []
    for fi, val in enumerate(folds):
        val_set = set(val.tolist())
        train_idx = [i for i in range(len(pairs)) if i not in val_set]
        predict_fn = trainer([pairs[i] for i in train_idx])
        fold_cms.append(_evaluate(predict_fn, pairs, val))
    total = ConfusionMatrix()
    for cm in fold_cms:
        total = total + cm
    return fold_cms, total


def bench_latency(classify_fn, frames, min_samples: int = 1000) -> dict:
    """Wall-clock per-frame latency of ``classify_fn`` cycling through
    pre-loaded frames until at least ``min_samples`` calls are timed."""
    if not frames:
        raise ValueError("no frames to benchmark")
    times = []
    i = 0
    while len(times) < min_samples:
        frame = frames[i % len(frames)]
        t0 = time.perf_counter()
        classify_fn(frame)
        times.append(time.perf_counter() - t0)
        i += 1
    arr = np.array(times)
    mean = float(arr.mean())
    return {
        "samples": len(times),
        "mean_ms": mean * 1e3,
        "median_ms": float(np.median(arr)) * 1e3,
        "p95_ms": float(np.percentile(arr, 95)) * 1e3,
        "fps": 1.0 / mean,
    }


def estimate_training_time(n_items: int, iterations: int,
                           per_item_seconds: float) -> float:
    """Simple worst-case budget: items x iterations x per-item cost."""
    return n_items * iterations * per_item_seconds


@dataclass
class MetricsReport:
    user_id: str = ""
    accuracy: float = 0.0
    confusion: ConfusionMatrix = field(default_factory=ConfusionMatrix)
    fold_accuracies: list = field(default_factory=list)
    latency: dict = field(default_factory=dict)
    training_time_s: float = 0.0

    def to_json_obj(self) -> dict:
        return {
            "user_id": self.user_id,
            "accuracy": self.accuracy,
            "confusion_counts": self.confusion.to_rows(),
            "confusion_percent": [[float(v) for v in row]
                                  for row in self.confusion.normalized_percent()],
            "fold_accuracies": [float(a) for a in self.fold_accuracies],
            "latency": self.latency,
            "training_time_s": self.training_time_s,
            "classes": [g.wire_name for g in GAZE_CLASSES],
        }


def emit_report(report: MetricsReport, path, fmt: str = "json") -> Path:
    """Write the report deterministically; csv exports the normalized
    confusion matrix (header + one row per predicted class)."""
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "json":
        out.write_text(json.dumps(report.to_json_obj(), indent=2, sort_keys=True))
    elif fmt == "csv":
        pct = report.confusion.normalized_percent()
        with out.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["predicted\\actual"] + [g.wire_name for g in GAZE_CLASSES])
            for g in GAZE_CLASSES:
                writer.writerow([g.wire_name] + [f"{v:.2f}" for v in pct[int(g)]])
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    return out
