"""Confusion matrices, accuracy, balanced accuracy and per-SNR curves."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError

CHANCE_LEVEL = 1 / 7


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray  # rows = true class, cols = predicted
    labels: tuple

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class SnrCurve:
    snr_db: tuple
    balanced_accuracy: tuple
    counts: tuple
    omitted: tuple = field(default_factory=tuple)


def confusion(preds, labels, n_classes: int = 7, class_names=None) -> ConfusionMatrix:
    preds = np.asarray(preds, dtype=np.int64).ravel()
    labels = np.asarray(labels, dtype=np.int64).ravel()
    if preds.shape != labels.shape:
        raise InvalidInputError("preds and labels differ in length")
    for a in (preds, labels):
        if a.size and (a.min() < 0 or a.max() >= n_classes):
            raise InvalidInputError("class index out of range")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (labels, preds), 1)
    names = tuple(class_names) if class_names is not None else tuple(str(i) for i in range(n_classes))
    return ConfusionMatrix(cm, names)


def accuracy(cm: ConfusionMatrix) -> float:
    total = cm.counts.sum()
    if total == 0:
        raise InvalidInputError("empty confusion matrix")
    return float(np.trace(cm.counts) / total)


def balanced_accuracy(cm: ConfusionMatrix) -> float:
    """Mean per-class recall; every class must have at least one sample."""
    rows = cm.counts.sum(axis=1)
    if np.any(rows == 0):
        raise InvalidInputError("balanced accuracy needs every class present")
    return float(np.mean(np.diag(cm.counts) / rows))


def present_balanced_accuracy(cm: ConfusionMatrix) -> float:
    """Mean recall over the classes that occur; NaN for an empty matrix."""
    rows = cm.counts.sum(axis=1)
    keep = rows > 0
    if not keep.any():
        return float("nan")
    return float(np.mean(np.diag(cm.counts)[keep] / rows[keep]))


def per_snr_curve(preds, labels, snr_db, grid, n_classes: int = 7) -> SnrCurve:
    """Balanced accuracy (over classes present) inside each SNR bucket.

    Empty buckets are left out and listed in ``omitted``.
    """
    preds = np.asarray(preds)
    labels = np.asarray(labels)
    snr_db = np.asarray(snr_db, dtype=np.float64)
    pts, vals, counts, omitted = [], [], [], []
    for s in grid:
        sel = np.isclose(snr_db, s)
        if not sel.any():
            omitted.append(float(s))
            continue
        cm = confusion(preds[sel], labels[sel], n_classes)
        pts.append(float(s))
        vals.append(present_balanced_accuracy(cm))
        counts.append(int(sel.sum()))
    return SnrCurve(tuple(pts), tuple(vals), tuple(counts), tuple(omitted))
