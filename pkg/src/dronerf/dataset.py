"""Labelled noisy-spectrogram datasets: generation, on-disk format, stratified folds.

On-disk layout of a dataset directory::

    manifest.json   configuration, class table, counts, conventions
    data.bin        N fixed-size little-endian records:
                    u16 class_id | i16 round(snr_db*100) | f32[2][S][C] planes | u32 crc32

The CRC covers the record bytes preceding it.
"""

from __future__ import annotations

import hashlib
import json
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import sigcore, spectro, synth
from .errors import (
    ChecksumError,
    ConfigurationError,
    DatasetFormatError,
    InvalidInputError,
    TruncatedFileError,
    VersionMismatchError,
)
from .sigcore import IqFrame, SnrSpec

FORMAT_VERSION = 1
CLASSES = ("DJI", "FutabaT14", "FutabaT7", "Graupner", "Noise", "Taranis", "Turnigy")
NOISE_CLASS = CLASSES.index("Noise")
DRONE_CLASSES = tuple(c for c in CLASSES if c != "Noise")
SNR_GRID = tuple(float(s) for s in range(-20, 31, 2))

PAPER_CLASS_COUNTS = {
    "DJI": 1280, "FutabaT14": 3472, "FutabaT7": 801, "Graupner": 801,
    "Noise": 8872, "Taranis": 1663, "Turnigy": 855,
}
DESK_CLASS_COUNTS = {c: (1040 if c == "Noise" else 260) for c in CLASSES}

DRONE_MIXES = ("Lab", "Gauss")
NOISE_MIXES = ("Lab+Lab", "Lab+Gauss", "Gauss+Lab", "Gauss+Gauss")


def record_dtype(S: int, C: int) -> np.dtype:
    return np.dtype([("class_id", "<u2"), ("snr", "<i2"), ("planes", "<f4", (2, S, C)), ("crc", "<u4")])


@dataclass(frozen=True)
class DatasetConfig:
    counts: dict = field(default_factory=lambda: dict(DESK_CLASS_COUNTS))
    profile: synth.ScaleProfile = synth.DESK_PROFILE
    seed: int = 0
    snr_grid: tuple = SNR_GRID
    # fraction of a burst that must fall inside a selected frame
    min_burst_fraction: float = 0.25
    recording_frames: int = 32
    lab_noise: synth.NoiseModel = synth.LAB_NOISE
    gauss_noise: synth.NoiseModel = synth.GAUSSIAN_NOISE
    transmitter_table: str | None = None

    def to_dict(self) -> dict:
        from dataclasses import asdict

        return {
            "counts": dict(self.counts),
            "profile": self.profile.to_dict(),
            "seed": self.seed,
            "snr_grid": list(self.snr_grid),
            "min_burst_fraction": self.min_burst_fraction,
            "recording_frames": self.recording_frames,
            "lab_noise": asdict(self.lab_noise),
            "gauss_noise": asdict(self.gauss_noise),
            "transmitter_table": self.transmitter_table,
        }


@dataclass
class Dataset:
    planes: np.ndarray  # [N, 2, S, C] float32
    labels: np.ndarray  # [N] int64
    snr_db: np.ndarray  # [N] float64
    noise_kinds: list
    manifest: dict

    def __len__(self):
        return self.labels.shape[0]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(
            self.planes[idx], self.labels[idx], self.snr_db[idx],
            [self.noise_kinds[i] for i in idx], self.manifest,
        )

    def manifest_hash(self) -> str:
        return manifest_hash(self.manifest)


@dataclass(frozen=True)
class Fold:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray


@dataclass(frozen=True)
class SplitPlan:
    k: int
    folds: tuple

    def to_dict(self):
        return {"k": self.k, "folds": [{n: getattr(f, n).tolist() for n in ("train", "val", "test")} for f in self.folds]}


def manifest_hash(manifest: dict) -> str:
    blob = json.dumps(manifest, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def sample_plan(count: int, n_levels: int, n_kinds: int) -> list[tuple[int, int]]:
    """(snr level index, mix kind index) per sample; both histograms flat within 1."""
    per, extra = divmod(count, n_levels)
    plan = []
    c = 0
    for lvl in range(n_levels):
        for _ in range(per + (lvl < extra)):
            plan.append((lvl, c % n_kinds))
            c += 1
    return plan


def sample_rng(seed: int, class_id: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(class_id, index)))


def _noise_frame(kind: str, cfg: DatasetConfig, rng) -> IqFrame:
    prof = cfg.profile
    if kind == "Gauss":
        return synth.synth_noise(cfg.gauss_noise, prof, prof.frame_length, rng)
    q = prof.acquisition_factor
    raw = synth.synth_noise(cfg.lab_noise, prof, prof.frame_length * q, rng, rate_hz=prof.acquisition_rate_hz)
    return sigcore.decimate(raw, q) if q > 1 else raw


@dataclass
class DroneCapture:
    """A selected raw frame and what was known when it was picked."""

    frame: IqFrame
    recording_mean_energy: float
    frame_index: int
    burst_starts: list


def capture_drone_frame(model: synth.TransmitterModel, cfg: DatasetConfig, rng) -> DroneCapture:
    """Simulate a burst recording and pick one frame holding (part of) a burst.

    Only bursts overlapping the chosen frame are synthesised; bursts have unit
    carrier power, so the recording's mean energy is known exactly from their
    lengths.
    """
    prof = cfg.profile
    q = prof.acquisition_factor
    F = prof.frame_length
    rec_len = cfg.recording_frames * F
    fs = prof.sample_rate_hz
    for _attempt in range(64):
        offset = rng.uniform(0, model.repetition_min_s * prof.time_scale)
        starts_s = synth.synth_transmission_schedule(model, prof, rec_len / fs, rng, offset_s=offset)
        durations = [float(rng.choice(model.burst_durations_s)) for _ in starts_s]
        seeds = rng.integers(0, 2**63 - 1, size=len(starts_s))
        starts = [int(round(t * fs)) for t in starts_s]
        lengths = [int(round(d * prof.time_scale * fs)) for d in durations]
        ends = [min(s + n, rec_len) for s, n in zip(starts, lengths)]
        energy = sum(e - s for s, e in zip(starts, ends))
        mean_energy = energy / rec_len
        candidates = []
        for j in range(cfg.recording_frames):
            a, b = j * F, (j + 1) * F
            for s, n in zip(starts, lengths):
                inside = min(b, s + n) - max(a, s)
                if inside > 0 and inside >= cfg.min_burst_fraction * n:
                    candidates.append(j)
                    break
        if not candidates or mean_energy <= 0:
            continue
        for j in rng.permutation(candidates):
            a = j * F
            raw = np.zeros(F * q, dtype=np.complex128)
            for s, d, sd in zip(starts, durations, seeds):
                b = synth.synth_burst(model, prof, np.random.default_rng(sd), rate_hz=fs * q, duration_s=d)
                s_q = s * q
                lo, hi = max(s_q, a * q), min(s_q + b.frame.length, (a + F) * q)
                if hi > lo:
                    raw[lo - a * q : hi - a * q] += b.frame.samples[lo - s_q : hi - s_q]
            frame = IqFrame(raw.astype(np.complex64), fs * q)
            if q > 1:
                frame = sigcore.decimate(frame, q)
            peak = sigcore.smoothed_energy(frame.samples, sigcore.DEFAULT_SMOOTH_WINDOW).max()
            if sigcore.segment_has_burst(peak, mean_energy):
                return DroneCapture(frame, mean_energy, int(j), starts_s)
    raise ConfigurationError(f"{model.label}: could not capture a frame containing a burst")


def make_sample(cfg: DatasetConfig, class_id: int, index: int, snr_db: float, mix: str, models=None):
    """Generate one labelled sample; returns (planes, extra) with intermediate signals."""
    models = models or synth.load_transmitter_table(cfg.transmitter_table)
    rng = sample_rng(cfg.seed, class_id, index)
    snr = SnrSpec(snr_db)
    label = CLASSES[class_id]
    if label == "Noise":
        k1, k2 = mix.split("+")
        a = sigcore.normalize_mean_power(_noise_frame(k1, cfg, rng))
        b = sigcore.normalize_mean_power(_noise_frame(k2, cfg, rng))
        y = sigcore.mix_at_snr(a, b, snr)
        extra = {"capture": None}
    else:
        cap = capture_drone_frame(models[label], cfg, rng)
        mask = sigcore.detect_bursts(cap.frame)
        x_hat = sigcore.normalize_carrier_power(cap.frame, mask)
        n_hat = sigcore.normalize_mean_power(_noise_frame(mix, cfg, rng))
        y = sigcore.mix_at_snr(x_hat, n_hat, snr)
        extra = {"capture": cap, "mask": mask, "signal": x_hat, "noise": n_hat}
    spec = spectro.complex_spectrogram(y, cfg.profile.segment_length)
    return spec.planes.astype(np.float32), extra


def build_dataset(cfg: DatasetConfig | None = None, progress=None) -> Dataset:
    cfg = cfg or DatasetConfig()
    prof = cfg.profile
    n_levels = len(cfg.snr_grid)
    unknown = set(cfg.counts) - set(CLASSES)
    if unknown:
        raise ConfigurationError(f"unknown classes {sorted(unknown)}")
    for c, n in cfg.counts.items():
        if n < n_levels:
            raise ConfigurationError(f"class {c}: {n} samples cannot cover {n_levels} SNR levels")
    models = synth.load_transmitter_table(cfg.transmitter_table)
    S = prof.segment_length
    C = prof.frame_length // S
    total = sum(cfg.counts.values())
    planes = np.empty((total, 2, S, C), dtype=np.float32)
    labels = np.empty(total, dtype=np.int64)
    snrs = np.empty(total, dtype=np.float64)
    kinds = []
    row = 0
    for class_id, label in enumerate(CLASSES):
        count = cfg.counts.get(label, 0)
        mixes = NOISE_MIXES if label == "Noise" else DRONE_MIXES
        for index, (lvl, kind) in enumerate(sample_plan(count, n_levels, len(mixes))):
            snr = cfg.snr_grid[lvl]
            planes[row], _ = make_sample(cfg, class_id, index, snr, mixes[kind], models)
            labels[row] = class_id
            snrs[row] = snr
            kinds.append(mixes[kind])
            row += 1
            if progress is not None:
                progress(row, total)
    stats = spectro.compute_plane_stats(planes)
    manifest = {
        "format_version": FORMAT_VERSION,
        "profile": prof.to_dict(),
        "classes": list(CLASSES),
        "snr_grid": list(cfg.snr_grid),
        "counts": {c: int(cfg.counts.get(c, 0)) for c in CLASSES},
        "spectrogram_shape": [2, S, C],
        "dtype": "<f4",
        "record_layout": "u16 class_id, i16 snr_db*100, f32[2][S][C], u32 crc32 (little-endian)",
        "fft": dict(spectro.FFT_CONVENTIONS),
        "plane_stats": stats.to_dict(),
        "seed": cfg.seed,
        "generator": cfg.to_dict(),
        "n_records": int(total),
        "noise_kinds": kinds,
    }
    return Dataset(planes, labels, snrs, kinds, manifest)


def _records(ds: Dataset) -> np.ndarray:
    _, _, S, C = ds.planes.shape
    rec = np.zeros(len(ds), dtype=record_dtype(S, C))
    rec["class_id"] = ds.labels
    rec["snr"] = np.round(ds.snr_db * 100).astype(np.int16)
    rec["planes"] = ds.planes
    raw = rec.view(np.uint8).reshape(len(ds), -1)
    body = raw.shape[1] - 4
    rec["crc"] = [zlib.crc32(r[:body].tobytes()) for r in raw]
    return rec


def save_dataset(ds: Dataset, path) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    rec = _records(ds)
    manifest = dict(ds.manifest)
    manifest["record_size"] = rec.dtype.itemsize
    manifest["n_records"] = len(ds)
    (path / "data.bin").write_bytes(rec.tobytes())
    (path / "manifest.json").write_text(json.dumps(manifest, indent=1))
    ds.manifest = manifest
    return path


def load_dataset(path) -> Dataset:
    path = Path(path)
    try:
        manifest = json.loads((path / "manifest.json").read_text())
    except FileNotFoundError as e:
        raise DatasetFormatError(f"missing manifest in {path}") from e
    except json.JSONDecodeError as e:
        raise DatasetFormatError(f"unreadable manifest: {e}") from e
    if manifest.get("format_version") != FORMAT_VERSION:
        raise VersionMismatchError(f"dataset format {manifest.get('format_version')!r}, expected {FORMAT_VERSION}")
    _, S, C = manifest["spectrogram_shape"]
    dt = record_dtype(S, C)
    n = int(manifest["n_records"])
    try:
        blob = (path / "data.bin").read_bytes()
    except FileNotFoundError as e:
        raise DatasetFormatError(f"missing data.bin in {path}") from e
    if len(blob) != n * dt.itemsize:
        raise TruncatedFileError(f"data.bin has {len(blob)} bytes, expected {n * dt.itemsize}")
    rec = np.frombuffer(blob, dtype=dt)
    raw = np.frombuffer(blob, dtype=np.uint8).reshape(n, dt.itemsize)
    body = dt.itemsize - 4
    for i in range(n):
        if zlib.crc32(raw[i, :body].tobytes()) != int(rec["crc"][i]):
            raise ChecksumError(f"record {i} fails its CRC32")
    labels = rec["class_id"].astype(np.int64)
    counts = np.bincount(labels, minlength=len(CLASSES))
    expected = [manifest["counts"].get(c, 0) for c in CLASSES]
    if counts.tolist() != expected:
        raise DatasetFormatError(f"class counts {counts.tolist()} disagree with manifest {expected}")
    planes = rec["planes"].astype(np.float32)
    snr = rec["snr"].astype(np.float64) / 100.0
    kinds = list(manifest.get("noise_kinds", [""] * n))
    return Dataset(planes, labels, snr, kinds, manifest)


def stratified_kfold(labels, k: int = 5, val_fraction: float = 0.2, seed: int = 0) -> SplitPlan:
    """Stratified k-fold test partition with a stratified validation carve-out per fold."""
    labels = np.asarray(labels)
    if k < 2:
        raise InvalidInputError("k must be >= 2")
    if not 0 <= val_fraction < 1:
        raise InvalidInputError("val_fraction must lie in [0, 1)")
    rng = np.random.default_rng(seed)
    classes = np.unique(labels)
    chunks = {}
    for c in classes:
        idx = np.flatnonzero(labels == c)
        if idx.size < k:
            raise InvalidInputError(f"class {c} has {idx.size} samples, fewer than k={k}")
        chunks[c] = np.array_split(rng.permutation(idx), k)
    folds = []
    for f in range(k):
        train, val, test = [], [], []
        for c in classes:
            test.append(chunks[c][f])
            rest = np.concatenate([chunks[c][g] for g in range(k) if g != f])
            rest = rng.permutation(rest)
            n_val = int(round(val_fraction * rest.size))
            val.append(rest[:n_val])
            train.append(rest[n_val:])
        folds.append(Fold(*(np.sort(np.concatenate(p)) for p in (train, val, test))))
    return SplitPlan(k, tuple(folds))
