import json

import numpy as np
import pytest

from dronerf import metrics
from dronerf.dataset import CLASSES as CLASS_NAMES, SNR_GRID
from dronerf.errors import InvalidInputError
from dronerf.nn import VggConfig, VggNet
from dronerf.reports import (EmbeddingSet, EvalReport, emit_reports, extract_embeddings, read_confusion_csv,
                             read_embeddings_csv, read_snr_curve_csv)


def fake_predictions(n=280, seed=0):
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % 7
    snr = np.asarray(SNR_GRID)[rng.integers(0, len(SNR_GRID), n)]
    preds = np.where(rng.random(n) < 0.6, labels, rng.integers(0, 7, n))
    return preds, labels, snr


def test_roundtrip_and_summary(tmp_path):
    preds, labels, snr = fake_predictions()
    rep = EvalReport.from_predictions(preds, labels, snr, CLASS_NAMES, SNR_GRID, fold=0)
    X = np.random.default_rng(1).standard_normal((len(preds), 256))
    rep.embedding = EmbeddingSet(X, labels, snr, np.arange(len(preds)))
    rep.points = X[:, :2]
    files = emit_reports(rep, tmp_path, figures=True)
    assert (tmp_path / "confusion.png").exists() and (tmp_path / "embeddings.png").exists()
    cm = read_confusion_csv(files["confusion"])
    assert np.array_equal(cm.counts, rep.cm.counts) and cm.labels == tuple(CLASS_NAMES)
    curve = read_snr_curve_csv(files["snr_curve"])
    assert np.allclose(curve.balanced_accuracy, rep.curve.balanced_accuracy, atol=1e-6)
    rows = read_embeddings_csv(files["embeddings"])
    assert len(rows) == len(preds)
    assert len(files["embeddings"].read_text().splitlines()) == len(preds) + 1
    summ = json.loads(files["summary"].read_text())
    assert summ["schema_version"] == 1 and summ["fold"] == 0
    # recompute balanced accuracy from the CSV alone
    counts = cm.counts.astype(float)
    assert summ["balanced_accuracy"] == pytest.approx(np.mean(np.diag(counts) / counts.sum(axis=1)))


def test_matches_sklearn_balanced_accuracy():
    from sklearn.metrics import balanced_accuracy_score

    preds, labels, snr = fake_predictions(seed=4)
    rep = EvalReport.from_predictions(preds, labels, snr, CLASS_NAMES, SNR_GRID)
    assert rep.summary()["balanced_accuracy"] == pytest.approx(balanced_accuracy_score(labels, preds))


def test_no_figures_flag(tmp_path):
    preds, labels, snr = fake_predictions()
    emit_reports(EvalReport.from_predictions(preds, labels, snr, CLASS_NAMES, SNR_GRID), tmp_path, figures=False)
    assert not list(tmp_path.glob("*.png"))


def test_extract_embeddings():
    m = VggNet(VggConfig("vgg11", (2, 4), (2, 8, 8)), seed=0)
    x = np.random.default_rng(0).standard_normal((5, 2, 8, 8)).astype(np.float32)
    emb = extract_embeddings(m, x, np.zeros(5, int), np.zeros(5), batch_size=2)
    assert emb.matrix.shape == (5, 256) and np.all(emb.matrix >= 0)
    with pytest.raises(InvalidInputError):
        extract_embeddings(m, x[:, :, :4], np.zeros(5, int), np.zeros(5))
    with pytest.raises(InvalidInputError):
        EmbeddingSet(emb.matrix, np.zeros(4), np.zeros(5), np.arange(5))


def test_summary_with_missing_classes():
    labels = np.array([0, 0, 1, 1])
    rep = EvalReport.from_predictions(np.array([0, 1, 1, 1]), labels, np.zeros(4), CLASS_NAMES, SNR_GRID)
    assert rep.summary()["balanced_accuracy"] == pytest.approx(0.75)
    assert metrics.accuracy(rep.cm) == pytest.approx(0.75)


def test_duplicate_sample_gives_identical_rows():
    m = VggNet(VggConfig("vgg11", (2, 4), (2, 8, 8)), seed=1)
    x = np.random.default_rng(2).standard_normal((3, 2, 8, 8)).astype(np.float32)
    x = np.concatenate([x, x[1:2]])
    emb = extract_embeddings(m, x, np.zeros(4, int), np.zeros(4), batch_size=3)
    assert np.array_equal(emb.matrix[1], emb.matrix[3])
