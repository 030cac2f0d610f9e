"""Evaluation metrics: binary accuracy/F1, multiclass accuracy MA(k),
multiclass F1, MAE, and Pearson correlation."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, UndefinedCorrelationError


@dataclass
class EvalReport:
    task: str
    n: int
    metrics: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"task": self.task, "n": self.n, "metrics": self.metrics}

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def _paired(preds, labels, name):
    p, y = list(preds), list(labels)
    if len(p) != len(y):
        raise DomainError(f"{name}: length mismatch {len(p)} vs {len(y)}")
    if not p:
        raise DomainError(f"{name}: empty input")
    return p, y


def binary_metrics(preds, labels) -> tuple[float, float]:
    """(accuracy, positive-class F1); F1 is 0 when precision+recall is 0."""
    p, y = _paired(preds, labels, "binary_metrics")
    tp = sum(1 for a, b in zip(p, y) if a == 1 and b == 1)
    fp = sum(1 for a, b in zip(p, y) if a == 1 and b == 0)
    fn = sum(1 for a, b in zip(p, y) if a == 0 and b == 1)
    correct = sum(1 for a, b in zip(p, y) if a == b)
    ba = correct / len(p)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return ba, f1


def multiclass_accuracy(preds, labels, k: int) -> float:
    """Exact-match accuracy over classes 0..k-1."""
    p, y = _paired(preds, labels, "multiclass_accuracy")
    for v in (*p, *y):
        if not (0 <= v < k):
            raise DomainError(f"class {v} out of range [0, {k})")
    return sum(1 for a, b in zip(p, y) if a == b) / len(p)


def multiclass_f1(preds, labels, k: int, average: str = "weighted") -> float:
    """Per-class F1 combined by support-weighted (default) or macro average."""
    p, y = _paired(preds, labels, "multiclass_f1")
    if average not in ("weighted", "macro"):
        raise DomainError(f"unknown F1 average '{average}'")
    scores, weights = [], []
    for cls in range(k):
        tp = sum(1 for a, b in zip(p, y) if a == cls and b == cls)
        fp = sum(1 for a, b in zip(p, y) if a == cls and b != cls)
        fn = sum(1 for a, b in zip(p, y) if a != cls and b == cls)
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        scores.append(f1)
        weights.append(tp + fn)
    if average == "macro":
        return sum(scores) / k
    total = sum(weights)
    if total == 0:
        return 0.0
    return sum(s * w for s, w in zip(scores, weights)) / total


def mae(preds, labels) -> float:
    p, y = _paired(preds, labels, "mae")
    return sum(abs(a - b) for a, b in zip(p, y)) / len(p)


def pearson_r(preds, labels) -> float:
    """Sample Pearson correlation; constant inputs are an error, never NaN."""
    p, y = _paired(preds, labels, "pearson_r")
    if len(p) < 2:
        raise DomainError("pearson_r: need at least 2 points")
    pa, ya = np.asarray(p, dtype=np.float64), np.asarray(y, dtype=np.float64)
    pc, yc = pa - pa.mean(), ya - ya.mean()
    sp, sy = math.sqrt(float(pc @ pc)), math.sqrt(float(yc @ yc))
    if sp == 0.0 or sy == 0.0:
        raise UndefinedCorrelationError("pearson_r: an input is constant")
    return float(pc @ yc) / (sp * sy)


def binarize_regression(preds, threshold: float = 0.0) -> list[int]:
    """Strictly-greater thresholding: p > threshold -> 1, else 0."""
    return [1 if p > threshold else 0 for p in preds]


def regression_to_classes(values, k: int, offset: int | None = None) -> list[int]:
    """Round each value to the nearest integer bin and clamp into [0, k).

    ``offset`` is the real value of bin 0; by default bins are centered on
    zero (offset -(k-1)//2), matching sentiment scales like [-3, 3] -> MA(7).
    """
    if offset is None:
        offset = -((k - 1) // 2)
    out = []
    for v in values:
        cls = int(round(v)) - offset
        out.append(min(max(cls, 0), k - 1))
    return out


def regression_report(preds, labels, ma_classes: int | None = None,
                      threshold: float = 0.0) -> EvalReport:
    """MAE, Pearson r, and thresholded binary metrics for a regression task;
    optionally MA(k) after integer binning."""
    p, y = _paired(preds, labels, "regression_report")
    report = EvalReport(task="regression", n=len(p))
    report.metrics["mae"] = mae(p, y)
    try:
        report.metrics["pearson_r"] = pearson_r(p, y)
    except UndefinedCorrelationError:
        pass  # leave r out rather than reporting NaN
    bp = binarize_regression(p, threshold)
    by = binarize_regression(y, threshold)
    ba, f1 = binary_metrics(bp, by)
    report.metrics["binary_accuracy"] = ba
    report.metrics["binary_f1"] = f1
    if ma_classes:
        report.metrics[f"ma{ma_classes}"] = multiclass_accuracy(
            regression_to_classes(p, ma_classes), regression_to_classes(y, ma_classes),
            ma_classes)
    return report


def classification_report(preds, labels, k: int) -> EvalReport:
    """MA(k) and F1 for integer class predictions."""
    p, y = _paired(preds, labels, "classification_report")
    report = EvalReport(task="classification", n=len(p))
    report.metrics[f"ma{k}"] = multiclass_accuracy(p, y, k)
    report.metrics["f1"] = multiclass_f1(p, y, k)
    if k == 2:
        ba, f1 = binary_metrics(p, y)
        report.metrics["binary_accuracy"] = ba
        report.metrics["binary_f1"] = f1
    return report
