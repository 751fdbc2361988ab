"""Simulated real-time detection: scheduled transmitters through a channel model,
one-second IQ batches, per-frame classification and drone/noise pooling.

Scenario file (JSON)::

    {
      "duration_s": 30,                  # whole seconds
      "profile": "desk",                 # or a ScaleProfile dict
      "reference_snr_db": 10.0,          # carrier/noise power at reference distance, 0 dBi
      "noise": {"kind": "LabLike", "power": 1.0},
      "channel": {"reference_distance_m": 110.0},
      "transmitters": [
        {"label": "DJI", "start_s": 0, "stop_s": 10, "distance_m": 110, "bearing_deg": 0}
      ]
    }
"""

from __future__ import annotations

import json
import queue
import threading
import time
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import metrics, sigcore, spectro, synth
from .dataset import CLASSES, NOISE_CLASS
from .errors import ConfigurationError, InvalidInputError, SampleRateMismatchError
from .sigcore import IqFrame

SUMMARY_SCHEMA_VERSION = 1
QUEUE_CAPACITY = 2
DEFAULT_THRESHOLD = 0.5
MIN_BURST_FRACTION = 0.25
# zero padding (profile-rate samples) around each burst before decimation
_EDGE = 64


# channel ---------------------------------------------------------------------
@dataclass(frozen=True)
class ChannelModel:
    reference_distance_m: float = 110.0
    path_loss_exponent: float = 2.0
    gain_front_dbi: float = 8.5
    gain_side_dbi: float = -1.5
    gain_back_dbi: float = -11.5

    def __post_init__(self):
        if not self.reference_distance_m > 0:
            raise InvalidInputError("reference distance must be positive")
        gains = (self.gain_front_dbi, self.gain_side_dbi, self.gain_back_dbi)
        if not all(np.isfinite(gains)):
            raise InvalidInputError("antenna gains must be finite")

    @property
    def front_to_back_db(self) -> float:
        return self.gain_front_dbi - self.gain_back_dbi

    def gain_dbi(self, bearing_deg: float) -> float:
        """Piecewise-linear pattern through 0, 90 and 180 degrees, symmetric in bearing."""
        b = abs((float(bearing_deg) + 180.0) % 360.0 - 180.0)
        return float(np.interp(b, [0.0, 90.0, 180.0], [self.gain_front_dbi, self.gain_side_dbi, self.gain_back_dbi]))

    def amplitude_gain(self, distance_m: float, bearing_deg: float) -> float:
        if not distance_m > 0:
            raise InvalidInputError("distance must be positive")
        path = (self.reference_distance_m / distance_m) ** (self.path_loss_exponent / 2.0)
        return path * 10.0 ** (self.gain_dbi(bearing_deg) / 20.0)


def apply_channel(frame: IqFrame, distance_m: float, bearing_deg: float, channel: ChannelModel) -> IqFrame:
    g = channel.amplitude_gain(distance_m, bearing_deg)
    return frame.with_samples(frame.samples * g)


# scenario --------------------------------------------------------------------
@dataclass(frozen=True)
class Placement:
    label: str
    start_s: float
    stop_s: float
    distance_m: float
    bearing_deg: float = 0.0

    def key(self) -> int:
        doc = json.dumps(asdict(self), sort_keys=True)
        return zlib.crc32(doc.encode())


@dataclass(frozen=True)
class Scenario:
    duration_s: int
    transmitters: tuple = ()
    profile: synth.ScaleProfile = synth.DESK_PROFILE
    reference_snr_db: float = 10.0
    noise_kind: str = "LabLike"
    noise_power: float = 1.0
    channel: ChannelModel = field(default_factory=ChannelModel)

    def __post_init__(self):
        if int(self.duration_s) != self.duration_s or self.duration_s < 1:
            raise InvalidInputError("duration_s must be a positive whole number of seconds")
        object.__setattr__(self, "duration_s", int(self.duration_s))
        if self.noise_kind not in ("Gaussian", "LabLike"):
            raise InvalidInputError(f"unknown noise kind {self.noise_kind!r}")
        if not self.noise_power > 0:
            raise InvalidInputError("noise power must be positive")
        ts = tuple(t if isinstance(t, Placement) else Placement(**t) for t in self.transmitters)
        for t in ts:
            if t.label not in CLASSES or t.label == "Noise":
                raise InvalidInputError(f"unknown transmitter {t.label!r}")
            if not 0 <= t.start_s < t.stop_s <= self.duration_s:
                raise InvalidInputError(f"{t.label}: times must satisfy 0 <= start < stop <= duration")
            if not t.distance_m > 0:
                raise InvalidInputError(f"{t.label}: distance must be positive")
        object.__setattr__(self, "transmitters", ts)

    @property
    def frames_per_batch(self) -> int:
        return int(self.profile.sample_rate_hz) // self.profile.frame_length

    def to_dict(self) -> dict:
        return {
            "duration_s": self.duration_s,
            "profile": self.profile.to_dict(),
            "reference_snr_db": self.reference_snr_db,
            "noise": {"kind": self.noise_kind, "power": self.noise_power},
            "channel": asdict(self.channel),
            "transmitters": [asdict(t) for t in self.transmitters],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        prof = d.get("profile", "desk")
        if isinstance(prof, str):
            if prof not in synth.PROFILES:
                raise InvalidInputError(f"unknown profile {prof!r}")
            prof = synth.PROFILES[prof]
        else:
            prof = synth.ScaleProfile.from_dict(prof)
        noise = d.get("noise", {})
        return cls(
            duration_s=d["duration_s"],
            transmitters=tuple(Placement(**t) for t in d.get("transmitters", [])),
            profile=prof,
            reference_snr_db=float(d.get("reference_snr_db", 10.0)),
            noise_kind=noise.get("kind", "LabLike"),
            noise_power=float(noise.get("power", 1.0)),
            channel=ChannelModel(**d.get("channel", {})),
        )


def load_scenario(path) -> Scenario:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise InvalidInputError(f"scenario {path}: {e}") from e
    try:
        return Scenario.from_dict(doc)
    except (KeyError, TypeError) as e:
        raise InvalidInputError(f"scenario {path}: malformed ({e})") from e


def save_scenario(scenario: Scenario, path):
    Path(path).write_text(json.dumps(scenario.to_dict(), indent=2) + "\n")


# ground-truth schedule ---------------------------------------------------------
@dataclass(frozen=True)
class ScheduledBurst:
    placement: int
    label: str
    start_s: float
    duration_s: float  # profile time (already time-scaled)
    seed: int

    def sample_span(self, fs: float) -> tuple[int, int]:
        a = int(round(self.start_s * fs))
        return a, a + int(round(self.duration_s * fs))


def _placement_seeds(scenario: Scenario, seed: int) -> list[np.random.SeedSequence]:
    # keyed on placement content so a transmitter's bursts do not depend on its neighbours
    seen: dict[int, int] = {}
    out = []
    for t in scenario.transmitters:
        k = t.key()
        dup = seen.get(k, 0)
        seen[k] = dup + 1
        out.append(np.random.SeedSequence(seed, spawn_key=(1, k, dup)))
    return out


def scenario_schedule(scenario: Scenario, seed: int = 0, models=None) -> list[ScheduledBurst]:
    models = models or synth.load_transmitter_table()
    prof = scenario.profile
    bursts = []
    for i, (t, ss) in enumerate(zip(scenario.transmitters, _placement_seeds(scenario, seed))):
        rng = np.random.default_rng(ss)
        model = models[t.label]
        phase = rng.uniform(0, model.repetition_min_s * prof.time_scale)
        starts = synth.synth_transmission_schedule(model, prof, t.stop_s, rng, offset_s=t.start_s + phase)
        for s in starts:
            d = float(rng.choice(model.burst_durations_s)) * prof.time_scale
            if s + d > t.stop_s:
                break
            bursts.append(ScheduledBurst(i, t.label, float(s), d, int(rng.integers(0, 2**63 - 1))))
    return sorted(bursts, key=lambda b: (b.start_s, b.placement))


# source ----------------------------------------------------------------------
def _noise_batch(scenario: Scenario, seed: int, index: int) -> np.ndarray:
    prof = scenario.profile
    fs = int(prof.sample_rate_hz)
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0, index)))
    model = synth.GAUSSIAN_NOISE if scenario.noise_kind == "Gaussian" else synth.LAB_NOISE
    q = prof.acquisition_factor
    if model.kind == "Gaussian" or q == 1:
        frame = synth.synth_noise(model, prof, fs, rng)
    else:
        raw = synth.synth_noise(model, prof, fs * q, rng, rate_hz=prof.acquisition_rate_hz)
        frame = sigcore.decimate(raw, q)
    frame = sigcore.normalize_mean_power(frame)
    return frame.samples.astype(np.complex128) * np.sqrt(scenario.noise_power)


def _signal_batch(scenario: Scenario, bursts, index: int, models) -> np.ndarray:
    """Channel-scaled transmitter signal for batch ``index`` (profile rate).

    Each burst is synthesised at the acquisition rate and decimated on its own
    short zero-padded segment; filtering a mostly empty second would spend its
    time on denormal filter tails.
    """
    prof = scenario.profile
    fs = int(prof.sample_rate_hz)
    q = prof.acquisition_factor
    a0 = index * fs
    out = np.zeros(fs, dtype=np.complex128)
    amp = np.sqrt(scenario.noise_power * 10.0 ** (scenario.reference_snr_db / 10.0))
    for b in bursts:
        s, e = b.sample_span(fs)
        if e + _EDGE <= a0 or s - _EDGE >= a0 + fs:
            continue
        t = scenario.transmitters[b.placement]
        burst = synth.synth_burst(
            models[b.label], prof, np.random.default_rng(b.seed),
            rate_hz=fs * q, duration_s=b.duration_s / prof.time_scale,
        )
        x = apply_channel(burst.frame, t.distance_m, t.bearing_deg, scenario.channel).samples * amp
        n = -(-len(x) // q) + 2 * _EDGE
        seg = np.zeros(n * q, dtype=np.complex128)
        seg[_EDGE * q : _EDGE * q + len(x)] = x
        if q > 1:
            seg = sigcore.decimate(IqFrame(seg, fs * q), q).samples
        off = s - _EDGE - a0
        lo, hi = max(off, 0), min(off + n, fs)
        if hi > lo:
            out[lo:hi] += seg[lo - off : hi - off]
    return out


def run_source(scenario: Scenario, seed: int = 0, models=None, include_noise: bool = True):
    """Yield ``duration_s`` one-second :class:`IqFrame` batches in order."""
    models = models or synth.load_transmitter_table()
    bursts = scenario_schedule(scenario, seed, models)
    fs = scenario.profile.sample_rate_hz
    if fs != int(fs):
        raise ConfigurationError("streaming needs an integer sample rate")
    for i in range(scenario.duration_s):
        x = _signal_batch(scenario, bursts, i, models)
        if include_noise:
            x = x + _noise_batch(scenario, seed, i)
        yield IqFrame(x.astype(np.complex64), fs)


# classification ----------------------------------------------------------------
@dataclass
class DetectionReport:
    batch_index: int
    frame_index: int
    timestamp_s: float
    posteriors: tuple
    label: str
    frame_decision: str  # this frame alone, after pooling classes to Drone/Noise
    pooled_decision: str  # whole batch: Drone iff any frame is a confident drone
    processing_latency_s: float
    realtime_factor: float

    LATENCY_FIELDS = ("processing_latency_s", "realtime_factor")

    def to_dict(self, with_latency=True) -> dict:
        d = asdict(self)
        d["posteriors"] = [float(p) for p in self.posteriors]
        if not with_latency:
            for k in self.LATENCY_FIELDS:
                d.pop(k)
        return d


def is_drone(posteriors, threshold: float) -> bool:
    k = int(np.argmax(posteriors))
    return k != NOISE_CLASS and posteriors[k] >= threshold


def classify_stream(batches, checkpoint, threshold: float = DEFAULT_THRESHOLD, profile=None):
    """Classify consecutive frames of each batch; yields :class:`DetectionReport` in order."""
    meta = checkpoint.metadata
    if profile is None:
        profile = synth.ScaleProfile.from_dict(meta["profile"]) if "profile" in meta else synth.DESK_PROFILE
    model = checkpoint.build_model()
    stats = checkpoint.input_stats
    F, S = profile.frame_length, profile.segment_length
    frame_dur = F / profile.sample_rate_hz
    frame_no = 0
    for bi, batch in enumerate(batches):
        if batch.sample_rate_hz != profile.sample_rate_hz:
            raise SampleRateMismatchError(
                f"batch at {batch.sample_rate_hz:g} Hz, checkpoint expects {profile.sample_rate_hz:g} Hz"
            )
        n_frames = batch.length // F
        pending = []
        for j in range(n_frames):
            t0 = time.perf_counter()
            frame = IqFrame(batch.samples[j * F : (j + 1) * F], batch.sample_rate_hz)
            planes = spectro.complex_spectrogram(frame, S).planes[None]
            x = spectro.input_standardize(spectro.power_normalize(planes), stats)
            post = model.predict_proba(x.astype(np.float32))[0].astype(np.float64)
            latency = time.perf_counter() - t0
            post = post / post.sum()
            pending.append((frame_no, j, post, latency))
            frame_no += 1
        pooled = "Drone" if any(is_drone(p, threshold) for _, _, p, _ in pending) else "Noise"
        for fi, j, post, latency in pending:
            yield DetectionReport(
                batch_index=bi,
                frame_index=fi,
                timestamp_s=float(bi + j * frame_dur),
                posteriors=tuple(float(p) for p in post),
                label=CLASSES[int(np.argmax(post))],
                frame_decision="Drone" if is_drone(post, threshold) else "Noise",
                pooled_decision=pooled,
                processing_latency_s=latency,
                realtime_factor=latency / frame_dur,
            )


def run_pipeline(scenario: Scenario, checkpoint, seed: int = 0, threshold: float = DEFAULT_THRESHOLD,
                 capacity: int = QUEUE_CAPACITY) -> list[DetectionReport]:
    """Producer thread feeds batches through a bounded queue to the classifier."""
    q: queue.Queue = queue.Queue(maxsize=capacity)
    done = object()
    failure = []

    def produce():
        try:
            for batch in run_source(scenario, seed):
                q.put(batch)  # blocks while the consumer is behind
        except BaseException as e:  # handed to the consumer
            failure.append(e)
        finally:
            q.put(done)

    def drain():
        while True:
            item = q.get()
            if item is done:
                return
            yield item

    worker = threading.Thread(target=produce, name="iq-source", daemon=True)
    worker.start()
    reports = list(classify_stream(drain(), checkpoint, threshold, scenario.profile))
    worker.join()
    if failure:
        raise failure[0]
    return reports


def write_reports_jsonl(reports, path):
    with open(path, "w", encoding="utf-8") as f:
        for r in reports:
            f.write(json.dumps(r.to_dict()) + "\n")


def read_reports_jsonl(path) -> list[dict]:
    with open(path, encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]


# ground truth and summaries ----------------------------------------------------
@dataclass
class FrameTruth:
    labels: np.ndarray  # class index per frame
    placement: np.ndarray  # index into scenario.transmitters, -1 outside every window
    batch: np.ndarray


def frame_truth(scenario: Scenario, seed: int = 0, models=None) -> FrameTruth:
    """Per-frame labels: a transmitter's class when at least a quarter of one of its
    bursts falls inside the frame (largest overlap wins), otherwise Noise."""
    prof = scenario.profile
    fs = int(prof.sample_rate_hz)
    F = prof.frame_length
    nb = scenario.frames_per_batch
    n = scenario.duration_s * nb
    labels = np.full(n, NOISE_CLASS, dtype=np.int64)
    place = np.full(n, -1, dtype=np.int64)
    batch = np.repeat(np.arange(scenario.duration_s), nb)
    starts = batch * fs + np.tile(np.arange(nb) * F, scenario.duration_s)
    best = np.zeros(n)
    for b in scenario_schedule(scenario, seed, models):
        s, e = b.sample_span(fs)
        inside = np.minimum(starts + F, e) - np.maximum(starts, s)
        hit = (inside > 0) & (inside >= MIN_BURST_FRACTION * (e - s)) & (inside > best)
        labels[hit] = CLASSES.index(b.label)
        best[hit] = inside[hit]
    mid = (starts + F / 2) / fs
    for i, t in enumerate(scenario.transmitters):
        sel = (mid >= t.start_s) & (mid < t.stop_s) & (place < 0)
        place[sel] = i
    return FrameTruth(labels, place, batch)


def _binary_bacc(truth_drone, pred_drone) -> float | None:
    rec = []
    for v in (True, False):
        sel = truth_drone == v
        if sel.any():
            rec.append(np.mean(pred_drone[sel] == v))
    return float(np.mean(rec)) if rec else None


def summarize_run(reports, truth: FrameTruth, scenario: Scenario) -> dict:
    """Field-style tables of frame-level accuracy per transmitter placement.

    ``frame_balanced_accuracy`` is the 7-class balanced accuracy over the classes
    present in a cell; ``pooled_balanced_accuracy`` is drone-vs-noise after pooling.
    """
    doc = {"schema_version": SUMMARY_SCHEMA_VERSION, "n_frames": len(reports), "cells": [], "empty": not reports}
    if not reports:
        return doc
    if len(reports) != len(truth.labels):
        raise InvalidInputError(f"{len(reports)} reports for {len(truth.labels)} ground-truth frames")
    pred = np.array([CLASSES.index(r.label) for r in reports])
    pred_drone = np.array([r.frame_decision == "Drone" for r in reports])
    pooled = np.array([r.pooled_decision == "Drone" for r in reports])
    truth_drone = truth.labels != NOISE_CLASS

    def block(sel) -> dict:
        cm = metrics.confusion(pred[sel], truth.labels[sel], len(CLASSES), CLASSES)
        batches = np.unique(truth.batch[sel])
        with_burst = [b for b in batches if truth_drone[truth.batch == b].any()]
        det = [pooled[truth.batch == b][0] for b in with_burst]
        return {
            "n_frames": int(sel.sum()),
            "n_drone_frames": int(truth_drone[sel].sum()),
            "frame_balanced_accuracy": metrics.present_balanced_accuracy(cm) if sel.any() else None,
            "pooled_balanced_accuracy": _binary_bacc(truth_drone[sel], pred_drone[sel]),
            "batch_detection_rate": float(np.mean(det)) if det else None,
        }

    for i, t in enumerate(scenario.transmitters):
        cell = {"label": t.label, "distance_m": t.distance_m, "bearing_deg": t.bearing_deg}
        cell.update(block(truth.placement == i))
        doc["cells"].append(cell)
    doc["overall"] = block(np.ones(len(pred), dtype=bool))
    for key, attr in (("per_class", "label"), ("per_distance", "distance_m"), ("per_bearing", "bearing_deg")):
        groups: dict = {}
        for i, t in enumerate(scenario.transmitters):
            groups.setdefault(getattr(t, attr), []).append(i)
        doc[key] = {str(k): block(np.isin(truth.placement, v)) for k, v in groups.items()}
    lat = np.array([r.processing_latency_s for r in reports])
    doc["latency"] = {
        "mean_s": float(lat.mean()),
        "p95_s": float(np.percentile(lat, 95)),
        "mean_realtime_factor": float(np.mean([r.realtime_factor for r in reports])),
    }
    return doc


def field_table(summary: dict, key: str = "pooled_balanced_accuracy") -> dict:
    """``{(bearing, distance): value}`` from the summary cells."""
    return {(c["bearing_deg"], c["distance_m"]): c[key] for c in summary["cells"]}


FIELD_TABLE_COLUMNS = (
    "label", "distance_m", "bearing_deg", "n_frames", "n_drone_frames",
    "frame_balanced_accuracy", "pooled_balanced_accuracy", "batch_detection_rate",
)


def write_field_table_csv(summary: dict, path):
    import csv

    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(FIELD_TABLE_COLUMNS)
        for c in summary["cells"]:
            w.writerow(["" if c[k] is None else (f"{c[k]:.6f}" if isinstance(c[k], float) else c[k])
                        for k in FIELD_TABLE_COLUMNS])
