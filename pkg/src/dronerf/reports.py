"""Embedding extraction and report files (CSV/JSON, plus optional PNG figures)."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import metrics
from .errors import DroneRFError, InvalidInputError

SCHEMA_VERSION = 1
CONFUSION_FILE = "confusion.csv"
SNR_CURVE_FILE = "snr_curve.csv"
EMBEDDINGS_FILE = "embeddings.csv"
SUMMARY_FILE = "summary.json"


class ReportIOError(DroneRFError):
    """A report file could not be written or read back."""


@dataclass
class EmbeddingSet:
    matrix: np.ndarray  # [N, 256] post-ReLU activations of the first dense layer
    labels: np.ndarray
    snr_db: np.ndarray
    sample_ids: np.ndarray

    def __post_init__(self):
        n = self.matrix.shape[0]
        if not (len(self.labels) == len(self.snr_db) == len(self.sample_ids) == n):
            raise InvalidInputError("embedding rows and tags differ in length")

    def __len__(self):
        return self.matrix.shape[0]


def extract_embeddings(model, inputs, labels, snr_db, sample_ids=None, batch_size=64) -> EmbeddingSet:
    """Run ``model`` in eval mode over conditioned inputs and collect dense-layer activations."""
    inputs = np.asarray(inputs)
    if inputs.ndim != 4 or tuple(inputs.shape[1:]) != model.config.input_shape:
        raise InvalidInputError(f"inputs must be [N, {model.config.input_shape}], got {inputs.shape}")
    emb = model.embed(inputs, batch_size)
    ids = np.arange(len(inputs)) if sample_ids is None else np.asarray(sample_ids)
    return EmbeddingSet(np.asarray(emb, dtype=np.float64), np.asarray(labels), np.asarray(snr_db, float), ids)


@dataclass
class EvalReport:
    cm: metrics.ConfusionMatrix
    curve: metrics.SnrCurve
    extra: dict = field(default_factory=dict)
    embedding: EmbeddingSet | None = None
    points: np.ndarray | None = None  # [N, 2] t-SNE projection of ``embedding``

    @classmethod
    def from_predictions(cls, preds, labels, snr_db, class_names, grid, **extra):
        cm = metrics.confusion(preds, labels, len(class_names), class_names)
        curve = metrics.per_snr_curve(preds, labels, snr_db, grid, len(class_names))
        return cls(cm, curve, dict(extra))

    def summary(self) -> dict:
        try:
            bacc = metrics.balanced_accuracy(self.cm)
        except InvalidInputError:
            bacc = metrics.present_balanced_accuracy(self.cm)
        return {
            "schema_version": SCHEMA_VERSION,
            "classes": list(self.cm.labels),
            "n_samples": self.cm.total,
            "accuracy": metrics.accuracy(self.cm) if self.cm.total else None,
            "balanced_accuracy": bacc,
            "chance_level": metrics.CHANCE_LEVEL,
            "snr_points": len(self.curve.snr_db),
            "snr_omitted": list(self.curve.omitted),
            **self.extra,
        }


# writers / readers -----------------------------------------------------------
def write_confusion_csv(cm: metrics.ConfusionMatrix, path):
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["true\\pred", *cm.labels])
        for name, row in zip(cm.labels, cm.counts):
            w.writerow([name, *(int(v) for v in row)])


def read_confusion_csv(path) -> metrics.ConfusionMatrix:
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    labels = tuple(rows[0][1:])
    counts = np.array([[int(v) for v in r[1:]] for r in rows[1:]], dtype=np.int64)
    return metrics.ConfusionMatrix(counts, labels)


def write_snr_curve_csv(curve: metrics.SnrCurve, path):
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["snr_db", "balanced_accuracy", "n_samples"])
        for s, v, n in zip(curve.snr_db, curve.balanced_accuracy, curve.counts):
            w.writerow([f"{s:g}", f"{v:.6f}", n])


def read_snr_curve_csv(path) -> metrics.SnrCurve:
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    return metrics.SnrCurve(
        tuple(float(r["snr_db"]) for r in rows),
        tuple(float(r["balanced_accuracy"]) for r in rows),
        tuple(int(r["n_samples"]) for r in rows),
    )


def write_embeddings_csv(emb: EmbeddingSet, points, class_names, path):
    points = np.asarray(points)
    if points.shape != (len(emb), 2):
        raise InvalidInputError("projection must be [N, 2] and match the embedding rows")
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["sample_id", "class", "snr_db", "x", "y"])
        for sid, lab, snr, (x, y) in zip(emb.sample_ids, emb.labels, emb.snr_db, points):
            w.writerow([int(sid), class_names[int(lab)], f"{snr:g}", f"{x:.6f}", f"{y:.6f}"])


def read_embeddings_csv(path):
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))


def write_json(doc, path):
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def emit_reports(report: EvalReport, path, figures: bool = True) -> dict:
    """Write the report files under ``path`` and return ``{kind: Path}``."""
    out = Path(path)
    written = {}
    try:
        out.mkdir(parents=True, exist_ok=True)
        written["confusion"] = out / CONFUSION_FILE
        write_confusion_csv(report.cm, written["confusion"])
        written["snr_curve"] = out / SNR_CURVE_FILE
        write_snr_curve_csv(report.curve, written["snr_curve"])
        if report.embedding is not None and report.points is not None:
            written["embeddings"] = out / EMBEDDINGS_FILE
            write_embeddings_csv(report.embedding, report.points, report.cm.labels, written["embeddings"])
        written["summary"] = out / SUMMARY_FILE
        write_json(report.summary(), written["summary"])
        if figures:
            from . import plotting

            written.update(plotting.render_report(report, out))
    except OSError as e:
        raise ReportIOError(f"cannot write reports to {out}: {e}") from e
    return written
