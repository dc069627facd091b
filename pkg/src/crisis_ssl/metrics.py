"""Macro-F1, confusion matrices, and Expected Calibration Error."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


def confusion(predictions, golds, class_count: int) -> np.ndarray:
    """counts[g][p]: gold class g predicted as p."""
    preds = np.asarray(predictions, dtype=int)
    gold = np.asarray(golds, dtype=int)
    if preds.shape != gold.shape:
        raise ValueError("predictions and golds must have equal length")
    if preds.size and (preds.min() < 0 or preds.max() >= class_count
                       or gold.min() < 0 or gold.max() >= class_count):
        raise ValueError("class index out of range")
    mat = np.zeros((class_count, class_count), dtype=int)
    np.add.at(mat, (gold, preds), 1)
    return mat


def f1_from_confusion(mat: np.ndarray) -> np.ndarray:
    """Per-class F1 with the zero-support convention F1 = 0 when P + R = 0."""
    tp = np.diag(mat).astype(float)
    fp = mat.sum(axis=0) - tp
    fn = mat.sum(axis=1) - tp
    denom = 2 * tp + fp + fn
    f1 = np.zeros(mat.shape[0])
    nz = denom > 0
    f1[nz] = 2 * tp[nz] / denom[nz]
    return f1


def macro_f1(predictions, golds, active_classes=None, class_count: int | None = None):
    """Unweighted mean of per-class F1 over the active classes.

    Returns (macro, per_class_f1) where per_class_f1 covers every class index;
    inactive classes still get their (zero-support) F1 but do not enter the
    mean.
    """
    preds = np.asarray(predictions, dtype=int)
    gold = np.asarray(golds, dtype=int)
    if preds.size == 0:
        raise ValueError("empty input")
    if class_count is None:
        class_count = int(max(preds.max(), gold.max())) + 1
    per_class = f1_from_confusion(confusion(preds, gold, class_count))
    active = np.arange(class_count) if active_classes is None else np.asarray(active_classes, dtype=int)
    return float(per_class[active].mean()), per_class


@dataclass(frozen=True)
class ReliabilityBin:
    lower: float
    upper: float
    count: int
    mean_confidence: float
    accuracy: float


def ece(confidences, correctness, bin_count: int = 10):
    """Expected Calibration Error over equal-width bins.

    Bins are left-closed, right-open, except the last which includes 1.0.
    ECE = sum over non-empty bins of (|bin|/N) * |mean confidence - accuracy|.
    Returns (ece, bins) with one ReliabilityBin per bin, empty ones included.
    """
    conf = np.asarray(confidences, dtype=float)
    correct = np.asarray(correctness, dtype=float)
    if conf.size == 0:
        raise ValueError("empty input")
    if conf.shape != correct.shape:
        raise ValueError("confidences and correctness must have equal length")
    if conf.min() < 0 or conf.max() > 1:
        raise ValueError("confidences must lie in [0, 1]")
    if bin_count < 1:
        raise ValueError("bin_count must be >= 1")
    which = np.minimum((conf * bin_count).astype(int), bin_count - 1)
    counts = np.bincount(which, minlength=bin_count)
    conf_sums = np.bincount(which, weights=conf, minlength=bin_count)
    hit_sums = np.bincount(which, weights=correct, minlength=bin_count)
    n = conf.size
    total = 0.0
    bins = []
    for b in range(bin_count):
        if counts[b]:
            mean_conf = conf_sums[b] / counts[b]
            acc = hit_sums[b] / counts[b]
            total += counts[b] / n * abs(mean_conf - acc)
        else:
            mean_conf = 0.0
            acc = 0.0
        bins.append(ReliabilityBin(b / bin_count, (b + 1) / bin_count,
                                   int(counts[b]), float(mean_conf), float(acc)))
    return float(total), bins


@dataclass
class MetricsReport:
    """One evaluation: Macro-F1, per-class F1, ECE with bins, and confusion."""

    macro_f1: float
    per_class_f1: list
    ece: float
    bins: list
    confusion: list
    active_classes: list
    n_examples: int

    def to_dict(self) -> dict:
        return {
            "macro_f1": self.macro_f1,
            "per_class_f1": list(self.per_class_f1),
            "ece": self.ece,
            "bins": [vars(b) for b in self.bins],
            "confusion": [list(map(int, row)) for row in self.confusion],
            "active_classes": list(map(int, self.active_classes)),
            "n_examples": self.n_examples,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        bins = [ReliabilityBin(**b) for b in d["bins"]]
        return cls(d["macro_f1"], d["per_class_f1"], d["ece"], bins,
                   d["confusion"], d["active_classes"], d["n_examples"])

    def save_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    def save_bins_tsv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("lower\tupper\tcount\tmean_confidence\taccuracy\n")
            for b in self.bins:
                fh.write(f"{b.lower:g}\t{b.upper:g}\t{b.count}"
                         f"\t{b.mean_confidence:.6f}\t{b.accuracy:.6f}\n")


def evaluate_probs(probs, golds, active_classes=None, bin_count: int = 10) -> MetricsReport:
    """Score a probability matrix: prediction = argmax, confidence = max prob."""
    probs = np.asarray(probs, dtype=float)
    gold = np.asarray(golds, dtype=int)
    preds = probs.argmax(axis=1)
    class_count = probs.shape[1]
    active = np.arange(class_count) if active_classes is None else np.asarray(active_classes, dtype=int)
    macro, per_class = macro_f1(preds, gold, active, class_count)
    conf = probs.max(axis=1)
    # Numerical slop can push a softmax max a hair above 1.
    conf = np.clip(conf, 0.0, 1.0)
    ece_val, bins = ece(conf, preds == gold, bin_count)
    mat = confusion(preds, gold, class_count)
    return MetricsReport(macro, per_class.tolist(), ece_val, bins,
                         mat.tolist(), active.tolist(), int(gold.size))
