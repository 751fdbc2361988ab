import json
import shutil
import struct
import zlib
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dronerf import dataset, sigcore, synth
from dronerf.errors import (ChecksumError, ConfigurationError, DatasetFormatError, InvalidInputError,
                            TruncatedFileError, VersionMismatchError)

GOLDEN = Path(__file__).parent / "fixtures" / "golden_dataset"


def test_snr_grid_and_classes():
    assert len(dataset.SNR_GRID) == 26
    assert dataset.SNR_GRID[0] == -20 and dataset.SNR_GRID[-1] == 30
    assert np.all(np.diff(dataset.SNR_GRID) == 2)
    assert dataset.CLASSES == tuple(sorted(dataset.CLASSES, key=str.lower))


def test_reference_counts():
    assert dataset.PAPER_CLASS_COUNTS == {"DJI": 1280, "FutabaT14": 3472, "FutabaT7": 801, "Graupner": 801,
                                          "Taranis": 1663, "Turnigy": 855, "Noise": 8872}
    assert all(v == 260 for k, v in dataset.DESK_CLASS_COUNTS.items() if k != "Noise")
    assert dataset.DESK_CLASS_COUNTS["Noise"] == 1040


def test_sample_plan_2600_gives_100_per_level():
    plan = dataset.sample_plan(2600, 26, 2)
    assert np.all(np.bincount([lvl for lvl, _ in plan], minlength=26) == 100)


@given(st.integers(26, 5000), st.sampled_from([2, 4]))
def test_sample_plan_flat(count, kinds):
    plan = dataset.sample_plan(count, 26, kinds)
    lv = np.bincount([p[0] for p in plan], minlength=26)
    kd = np.bincount([p[1] for p in plan], minlength=kinds)
    assert len(plan) == count
    assert lv.max() - lv.min() <= 1 and kd.max() - kd.min() <= 1


def test_unreachable_counts_rejected():
    with pytest.raises(ConfigurationError):
        dataset.build_dataset(dataset.DatasetConfig(counts={"DJI": 10}))
    with pytest.raises(ConfigurationError):
        dataset.build_dataset(dataset.DatasetConfig(counts={"Bogus": 26}))


def test_small_dataset_structure(small_dataset):
    ds = small_dataset
    assert ds.planes.shape == (len(ds), 2, 64, 64) and ds.planes.dtype == np.float32
    assert np.all(np.isfinite(ds.planes))
    assert ds.manifest["counts"]["Noise"] == 52
    for c in range(7):
        sel = ds.labels == c
        hist = np.array([np.sum(np.isclose(ds.snr_db[sel], s)) for s in dataset.SNR_GRID])
        assert hist.max() - hist.min() <= 1
    kinds = [k for k, lab in zip(ds.noise_kinds, ds.labels) if lab == dataset.NOISE_CLASS]
    shares = [kinds.count(m) for m in dataset.NOISE_MIXES]
    assert max(shares) - min(shares) <= 1 and sum(shares) == 52
    drone = [k for k, lab in zip(ds.noise_kinds, ds.labels) if lab != dataset.NOISE_CLASS]
    assert abs(drone.count("Lab") - drone.count("Gauss")) <= 6  # one per class at most


def test_drone_frames_pass_segment_selection():
    cfg = dataset.DatasetConfig(seed=3)
    models = synth.load_transmitter_table()
    for class_id, label in enumerate(dataset.CLASSES):
        if label == "Noise":
            continue
        for index in range(3):
            _, extra = dataset.make_sample(cfg, class_id, index, 10.0, "Lab", models)
            cap = extra["capture"]
            peak = sigcore.smoothed_energy(cap.frame.samples, sigcore.DEFAULT_SMOOTH_WINDOW).max()
            assert sigcore.segment_has_burst(peak, cap.recording_mean_energy)
            assert extra["mask"].count > 0
            power = np.abs(extra["signal"].samples.astype(complex)[extra["mask"].to_bool()]) ** 2
            assert power.mean() == pytest.approx(1.0, rel=1e-5)


def test_make_sample_deterministic():
    cfg = dataset.DatasetConfig(seed=5)
    a, _ = dataset.make_sample(cfg, 5, 7, -4.0, "Gauss")
    b, _ = dataset.make_sample(cfg, 5, 7, -4.0, "Gauss")
    c, _ = dataset.make_sample(cfg, 5, 8, -4.0, "Gauss")
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_roundtrip_bit_identical(tmp_path, small_dataset):
    dataset.save_dataset(small_dataset, tmp_path / "d")
    back = dataset.load_dataset(tmp_path / "d")
    assert np.array_equal(back.planes, small_dataset.planes)
    assert np.array_equal(back.labels, small_dataset.labels)
    assert np.array_equal(back.snr_db, small_dataset.snr_db)
    assert back.manifest == json.loads((tmp_path / "d" / "manifest.json").read_text())
    assert back.noise_kinds == small_dataset.noise_kinds


def test_load_errors(tmp_path, small_dataset):
    src = dataset.save_dataset(small_dataset.subset(np.arange(len(small_dataset))), tmp_path / "d")
    for name, mutate, err in [
        ("trunc", lambda p: (p / "data.bin").write_bytes((p / "data.bin").read_bytes()[:-1]), TruncatedFileError),
        ("flip", lambda p: _flip_byte(p / "data.bin", 100), ChecksumError),
        ("ver", lambda p: _edit_manifest(p, format_version=99), VersionMismatchError),
        ("counts", lambda p: _edit_manifest(p, counts={c: 0 for c in dataset.CLASSES}), DatasetFormatError),
        ("gone", lambda p: (p / "data.bin").unlink(), DatasetFormatError),
    ]:
        d = tmp_path / name
        shutil.copytree(src, d)
        mutate(d)
        with pytest.raises(err):
            dataset.load_dataset(d)


def _flip_byte(path, offset):
    b = bytearray(path.read_bytes())
    b[offset] ^= 0xFF
    path.write_bytes(bytes(b))


def _edit_manifest(path, **kw):
    m = json.loads((path / "manifest.json").read_text())
    m.update(kw)
    (path / "manifest.json").write_text(json.dumps(m))


def test_golden_fixture_decodes():
    ds = dataset.load_dataset(GOLDEN)
    assert ds.labels.tolist() == [0, 4, 6]
    assert ds.snr_db.tolist() == [-20.0, 0.0, 30.0]
    expect = np.array([[(i * 8 + j) * 0.25 - 1.0 for j in range(8)] for i in range(3)], np.float32)
    assert np.array_equal(ds.planes.reshape(3, 8), expect)
    # independent decode of the first record with struct
    raw = (GOLDEN / "data.bin").read_bytes()
    cls, snr, *vals, crc = struct.unpack("<Hh8fI", raw[:40])
    assert (cls, snr) == (0, -2000) and crc == zlib.crc32(raw[:36])


def test_golden_fixture_reencodes_identically(tmp_path):
    ds = dataset.load_dataset(GOLDEN)
    dataset.save_dataset(ds, tmp_path / "g")
    assert (tmp_path / "g" / "data.bin").read_bytes() == (GOLDEN / "data.bin").read_bytes()


# splits -------------------------------------------------------------------------
def test_kfold_examples():
    plan = dataset.stratified_kfold(np.zeros(100, int), 5, 0.2, 0)
    assert all(len(f.test) == 20 for f in plan.folds)
    labels = np.array([0] * 50 + [1] * 100)
    for f in dataset.stratified_kfold(labels, 5, 0.2, 1).folds:
        assert np.bincount(labels[f.test]).tolist() == [10, 20]
    with pytest.raises(InvalidInputError):
        dataset.stratified_kfold(np.array([0, 0, 0, 1]), 5)


def check_split_invariants(labels, plan, k):
    n = len(labels)
    tests = np.concatenate([f.test for f in plan.folds])
    assert np.array_equal(np.sort(tests), np.arange(n))
    for f in plan.folds:
        tr, va, te = set(f.train), set(f.val), set(f.test)
        assert not (tr & va) and not (tr & te) and not (va & te)
        assert len(tr | va | te) == n
        for c in np.unique(labels):
            n_c = np.sum(labels == c)
            assert abs(np.sum(labels[f.test] == c) - n_c / k) <= 1


@given(st.lists(st.integers(0, 6), min_size=35, max_size=300), st.integers(0, 1000))
def test_kfold_invariants_property(raw, seed):
    labels = np.array(raw)
    counts = np.bincount(labels)
    labels = labels[np.isin(labels, np.flatnonzero(counts >= 5))]
    if len(labels) == 0:
        return
    plan = dataset.stratified_kfold(labels, 5, 0.2, seed)
    check_split_invariants(labels, plan, 5)
    again = dataset.stratified_kfold(labels, 5, 0.2, seed)
    assert all(np.array_equal(a.train, b.train) and np.array_equal(a.test, b.test)
               for a, b in zip(plan.folds, again.folds))
