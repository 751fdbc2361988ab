import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dronerf import metrics
from dronerf.errors import InvalidInputError


def cm_of(counts):
    counts = np.asarray(counts)
    return metrics.ConfusionMatrix(counts, tuple(str(i) for i in range(len(counts))))


def test_identity():
    cm = cm_of(np.eye(7, dtype=int) * 5)
    assert metrics.accuracy(cm) == 1.0 and metrics.balanced_accuracy(cm) == 1.0


def test_two_class_example():
    cm = cm_of([[9, 1], [4, 6]])
    assert metrics.accuracy(cm) == pytest.approx(0.75)
    assert metrics.balanced_accuracy(cm) == pytest.approx(0.75)


def test_single_column_is_chance():
    counts = np.zeros((7, 7), int)
    counts[:, 3] = 10
    assert metrics.balanced_accuracy(cm_of(counts)) == pytest.approx(1 / 7)


def test_empty_row_rejected():
    with pytest.raises(InvalidInputError):
        metrics.balanced_accuracy(cm_of([[1, 0], [0, 0]]))
    assert metrics.present_balanced_accuracy(cm_of([[1, 0], [0, 0]])) == 1.0


def test_confusion_examples():
    assert metrics.confusion([], []).counts.sum() == 0
    y = np.arange(7).repeat(3)
    assert np.array_equal(metrics.confusion(y, y).counts, np.eye(7, dtype=int) * 3)
    with pytest.raises(InvalidInputError):
        metrics.confusion([7], [0])
    with pytest.raises(InvalidInputError):
        metrics.confusion([0, 1], [0])


@given(st.integers(0, 2**31))
def test_confusion_matches_tally(seed):
    r = np.random.default_rng(seed)
    y, p = r.integers(0, 7, 300), r.integers(0, 7, 300)
    cm = metrics.confusion(p, y).counts
    tally = np.zeros((7, 7), int)
    for t, q in zip(y, p):
        tally[t][q] += 1
    assert np.array_equal(cm, tally)
    assert np.array_equal(cm.sum(axis=1), np.bincount(y, minlength=7))


@given(st.integers(0, 2**31), st.integers(0, 6))
def test_balanced_accuracy_duplication_invariance(seed, c):
    r = np.random.default_rng(seed)
    y = np.concatenate([np.arange(7), r.integers(0, 7, 100)])
    p = np.where(r.random(len(y)) < 0.6, y, r.integers(0, 7, len(y)))
    sel = y == c
    y2 = np.concatenate([y, y[sel], y[sel]])
    p2 = np.concatenate([p, p[sel], p[sel]])
    a, b = metrics.confusion(p, y), metrics.confusion(p2, y2)
    assert metrics.balanced_accuracy(a) == pytest.approx(metrics.balanced_accuracy(b), abs=1e-12)
    recall_c = np.mean(p[sel] == y[sel])
    rest = np.mean(p[~sel] == y[~sel])
    if recall_c != rest:  # then plain accuracy must move
        assert metrics.accuracy(a) != pytest.approx(metrics.accuracy(b), abs=1e-12)


def test_accuracy_moves_under_duplication():
    y = np.array([0, 0, 1, 1])
    p = np.array([0, 0, 0, 0])
    y2, p2 = np.concatenate([y, [0, 0, 0, 0]]), np.concatenate([p, [0, 0, 0, 0]])
    a, b = metrics.confusion(p, y, 2), metrics.confusion(p2, y2, 2)
    assert metrics.balanced_accuracy(a) == metrics.balanced_accuracy(b) == 0.5
    assert metrics.accuracy(a) == 0.5 and metrics.accuracy(b) == 0.75


def test_snr_curve_examples():
    grid = tuple(float(s) for s in range(-20, 31, 2))
    y = np.arange(7).repeat(26)
    snr = np.tile(grid, 7)
    c = metrics.per_snr_curve(y, y, snr, grid)
    assert len(c.snr_db) == 26 and all(v == 1.0 for v in c.balanced_accuracy)
    one = metrics.per_snr_curve(y[:5], y[:5], np.full(5, 4.0), grid)
    assert one.snr_db == (4.0,) and len(one.omitted) == 25


@given(st.integers(0, 2**31))
def test_snr_curve_counts_sum_to_total(seed):
    r = np.random.default_rng(seed)
    grid = tuple(float(s) for s in range(-20, 31, 2))
    n = 200
    snr = r.choice(grid, n)
    y, p = r.integers(0, 7, n), r.integers(0, 7, n)
    c = metrics.per_snr_curve(p, y, snr, grid)
    assert sum(c.counts) == n
    assert all(0 <= v <= 1 for v in c.balanced_accuracy)
