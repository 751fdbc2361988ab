"""Data-preparation DSP: decimation, burst detection, power normalisation, SNR mixing.

All functions are pure.  Complex64 input gives complex64 output and complex128
input gives complex128 output; power sums are always accumulated in float64.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from .errors import DegenerateInputError, InvalidInputError

DEFAULT_SMOOTH_WINDOW = 129
DEFAULT_REL_THRESHOLD = 0.5
SEGMENT_ENERGY_FACTOR = 0.001

# decimation filter: order and family fixed, ripple/cutoff follow scipy.signal.decimate
CHEBY_ORDER = 8
CHEBY_RIPPLE_DB = 0.05
CHEBY_CUTOFF = 0.8


@dataclass(frozen=True)
class IqFrame:
    """Complex baseband samples with their sample rate."""

    samples: np.ndarray
    sample_rate_hz: float

    def __post_init__(self):
        x = np.asarray(self.samples)
        if x.ndim != 1 or x.size == 0:
            raise InvalidInputError("IqFrame samples must be a non-empty 1-D array")
        if not np.iscomplexobj(x):
            x = x.astype(np.complex64)
        elif x.dtype not in (np.complex64, np.complex128):
            x = x.astype(np.complex128)
        if not np.all(np.isfinite(x)):
            raise InvalidInputError("IqFrame samples must be finite")
        if not self.sample_rate_hz > 0:
            raise InvalidInputError("sample_rate_hz must be positive")
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "sample_rate_hz", float(self.sample_rate_hz))

    @property
    def length(self) -> int:
        return self.samples.shape[0]

    @property
    def duration_s(self) -> float:
        return self.length / self.sample_rate_hz

    def mean_power(self) -> float:
        return float(np.mean(np.abs(self.samples.astype(np.complex128)) ** 2))

    def with_samples(self, samples) -> "IqFrame":
        return IqFrame(samples, self.sample_rate_hz)


@dataclass(frozen=True)
class BurstMask:
    """Sorted, disjoint half-open ``[start, end)`` intervals inside a frame."""

    intervals: tuple = field(default_factory=tuple)
    frame_length: int = 0

    def __post_init__(self):
        ivs = tuple((int(a), int(b)) for a, b in self.intervals)
        prev = 0
        for a, b in ivs:
            if not (prev <= a < b <= self.frame_length):
                raise InvalidInputError(f"bad interval [{a}, {b}) in frame of {self.frame_length}")
            prev = b
        object.__setattr__(self, "intervals", ivs)

    @property
    def count(self) -> int:
        """Number of covered samples (``m``)."""
        return sum(b - a for a, b in self.intervals)

    def to_bool(self) -> np.ndarray:
        out = np.zeros(self.frame_length, dtype=bool)
        for a, b in self.intervals:
            out[a:b] = True
        return out

    @classmethod
    def from_bool(cls, flags) -> "BurstMask":
        flags = np.asarray(flags, dtype=bool)
        padded = np.concatenate(([False], flags, [False])).astype(np.int8)
        edges = np.flatnonzero(np.diff(padded))
        return cls(tuple(zip(edges[0::2], edges[1::2])), flags.size)

    @classmethod
    def full(cls, n: int) -> "BurstMask":
        return cls(((0, n),), n)


@dataclass(frozen=True)
class SnrSpec:
    snr_db: float

    @property
    def k_factor(self) -> float:
        return 10.0 ** (self.snr_db / 10.0)


def _power64(x: np.ndarray) -> np.ndarray:
    x = x.astype(np.complex128, copy=False)
    return x.real * x.real + x.imag * x.imag


def decimation_filter(factor: int) -> np.ndarray:
    """Second-order sections of the anti-alias filter, scaled to unit DC gain."""
    sos = signal.cheby1(CHEBY_ORDER, CHEBY_RIPPLE_DB, CHEBY_CUTOFF / factor, output="sos")
    _, h = signal.sosfreqz(sos, worN=[0.0])
    sos = sos.copy()
    sos[0, :3] /= np.abs(h[0])
    return sos


def decimate(frame: IqFrame, factor: int) -> IqFrame:
    """Zero-phase Chebyshev-I low-pass, then keep every ``factor``-th sample."""
    if int(factor) != factor or factor < 2:
        raise InvalidInputError("decimation factor must be an integer >= 2")
    factor = int(factor)
    if frame.length % factor:
        raise InvalidInputError(f"frame length {frame.length} not divisible by {factor}")
    sos = decimation_filter(factor)
    x = frame.samples
    y = signal.sosfiltfilt(sos, x.astype(np.complex128))[::factor]
    return IqFrame(y.astype(x.dtype), frame.sample_rate_hz / factor)


def smoothed_energy(samples: np.ndarray, window: int) -> np.ndarray:
    """Centered moving average of ``|x|^2``; the window is truncated at the edges."""
    if window < 1:
        raise InvalidInputError("smooth_window must be >= 1")
    e = _power64(np.asarray(samples))
    n = e.size
    csum = np.concatenate(([0.0], np.cumsum(e)))
    idx = np.arange(n)
    lo = np.maximum(idx - (window - 1) // 2, 0)
    hi = np.minimum(idx + window // 2 + 1, n)
    return (csum[hi] - csum[lo]) / (hi - lo)


def detect_bursts(
    frame: IqFrame,
    smooth_window: int = DEFAULT_SMOOTH_WINDOW,
    rel_threshold: float = DEFAULT_REL_THRESHOLD,
) -> BurstMask:
    """Maximal runs where smoothed energy exceeds ``rel_threshold`` times its peak."""
    if not 0 < rel_threshold < 1:
        raise InvalidInputError("rel_threshold must lie in (0, 1)")
    s = smoothed_energy(frame.samples, smooth_window)
    peak = s.max()
    if peak <= 0:
        return BurstMask((), frame.length)
    return BurstMask.from_bool(s > rel_threshold * peak)


def segment_has_burst(
    segment_energy: float, recording_mean_energy: float, factor: float = SEGMENT_ENERGY_FACTOR
) -> bool:
    if not recording_mean_energy > 0:
        raise InvalidInputError("recording mean energy must be positive")
    return bool(segment_energy > factor * recording_mean_energy)


def select_burst_segments(
    recording: IqFrame,
    segment_length: int,
    smooth_window: int = DEFAULT_SMOOTH_WINDOW,
    factor: float = SEGMENT_ENERGY_FACTOR,
) -> list[int]:
    """Indices of non-overlapping segments whose peak smoothed energy passes the recording threshold.

    A trailing partial segment is discarded.
    """
    mean_energy = recording.mean_power()
    n_seg = recording.length // segment_length
    selected = []
    for j in range(n_seg):
        seg = recording.samples[j * segment_length : (j + 1) * segment_length]
        peak = smoothed_energy(seg, smooth_window).max()
        if segment_has_burst(peak, mean_energy, factor):
            selected.append(j)
    return selected


def normalize_carrier_power(frame: IqFrame, mask: BurstMask) -> IqFrame:
    """Scale so that the mean power over the masked (burst) samples is 1."""
    if mask.frame_length != frame.length:
        raise InvalidInputError("mask and frame lengths differ")
    m = mask.count
    if m == 0:
        raise DegenerateInputError("empty burst mask")
    p = _power64(frame.samples)
    masked = sum(p[a:b].sum() for a, b in mask.intervals) / m
    if masked <= 0:
        raise DegenerateInputError("zero energy under burst mask")
    y = frame.samples.astype(np.complex128) / np.sqrt(masked)
    return frame.with_samples(y.astype(frame.samples.dtype))


def normalize_mean_power(frame: IqFrame) -> IqFrame:
    """Scale so that the whole-frame mean power is 1."""
    p = _power64(frame.samples).mean()
    if p <= 0:
        raise DegenerateInputError("all-zero frame")
    y = frame.samples.astype(np.complex128) / np.sqrt(p)
    return frame.with_samples(y.astype(frame.samples.dtype))


def mix_at_snr(signal_frame: IqFrame, noise_frame: IqFrame, spec: SnrSpec) -> IqFrame:
    """(sqrt(k) * x + n) / sqrt(k + 1) with k = 10^(snr/10)."""
    if signal_frame.length != noise_frame.length:
        raise InvalidInputError("signal and noise lengths differ")
    if signal_frame.sample_rate_hz != noise_frame.sample_rate_hz:
        raise InvalidInputError("signal and noise sample rates differ")
    k = spec.k_factor
    dtype = np.result_type(signal_frame.samples.dtype, noise_frame.samples.dtype)
    x = signal_frame.samples.astype(np.complex128)
    n = noise_frame.samples.astype(np.complex128)
    sk = np.sqrt(k)
    d = np.sqrt(k + 1.0)
    y = np.empty_like(x)
    # real/imag kept separate so results equal per-element float arithmetic
    y.real = (sk * x.real + n.real) / d
    y.imag = (sk * x.imag + n.imag) / d
    return IqFrame(y.astype(dtype), signal_frame.sample_rate_hz)
