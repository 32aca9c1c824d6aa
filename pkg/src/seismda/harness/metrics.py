"""Classification metrics for damage predictions."""
from __future__ import annotations

import numpy as np

from ..errors import ArgumentError, DimensionError


def _pair(preds, labels):
    p = np.asarray(preds, dtype=np.int64).ravel()
    y = np.asarray(labels, dtype=np.int64).ravel()
    if p.shape != y.shape:
        raise DimensionError(f"{p.size} predictions for {y.size} labels")
    if p.size == 0:
        raise ArgumentError("no predictions to score")
    return p, y


def accuracy(preds, labels) -> float:
    p, y = _pair(preds, labels)
    return float(np.mean(p == y))


def pm1_accuracy(preds, labels) -> float:
    """Fraction of predictions at most one damage class away from the truth."""
    p, y = _pair(preds, labels)
    return float(np.mean(np.abs(p - y) <= 1))


def confusion(preds, labels, n_classes) -> np.ndarray:
    """``C[i, j]`` counts samples of true class ``i`` predicted as ``j``."""
    p, y = _pair(preds, labels)
    if p.min() < 0 or y.min() < 0 or max(p.max(), y.max()) >= n_classes:
        raise ArgumentError(f"class index outside [0, {n_classes})")
    out = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(out, (y, p), 1)
    return out


def summary(preds, labels, n_classes) -> dict:
    cm = confusion(preds, labels, n_classes)
    return {"accuracy": accuracy(preds, labels), "pm1_accuracy": pm1_accuracy(preds, labels),
            "confusion": cm.tolist(), "class_histogram": cm.sum(axis=1).tolist(),
            "n_eval": int(cm.sum())}
