"""Synthetic transmitter bursts and interference.

Signals are GFSK-like bursts placed on each transmitter's channel grid with the
timing from the transmitter table (``data/transmitters.json``).  Every quantity
in the table is in physical units at the 14 MHz reference bandwidth; a
:class:`ScaleProfile` maps it onto a concrete sample rate and frame size.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, InvalidInputError
from .sigcore import BurstMask, IqFrame

REFERENCE_RATE_HZ = 14e6
BAND_CENTER_HZ = 2.44175e9
# channels must fit inside the decimation filter passband
USABLE_BAND_FRACTION = 0.8
GFSK_BT = 0.5
GFSK_INDEX = 0.5
# symbol rate = occupied bandwidth / this
BANDWIDTH_PER_SYMBOL_RATE = 1.1


@dataclass(frozen=True)
class ScaleProfile:
    name: str
    sample_rate_hz: float
    frame_length: int
    segment_length: int
    time_scale: float = 1.0
    acquisition_factor: int = 4

    def __post_init__(self):
        S, n = self.segment_length, self.frame_length
        if S < 2 or S & (S - 1):
            raise ConfigurationError("segment length must be a power of two")
        if n % (S * S) or (n // (S * S)) & (n // (S * S) - 1):
            raise ConfigurationError("frame_length must equal S^2 * 2^j")
        if not (self.sample_rate_hz > 0 and self.time_scale > 0 and self.acquisition_factor >= 1):
            raise ConfigurationError("invalid profile rates")

    @property
    def freq_scale(self) -> float:
        """Ratio mapping reference-bandwidth frequencies onto this profile."""
        return self.sample_rate_hz / REFERENCE_RATE_HZ

    @property
    def frame_duration_s(self) -> float:
        return self.frame_length / self.sample_rate_hz

    @property
    def acquisition_rate_hz(self) -> float:
        return self.sample_rate_hz * self.acquisition_factor

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "sample_rate_hz": self.sample_rate_hz,
            "frame_length": self.frame_length,
            "segment_length": self.segment_length,
            "time_scale": self.time_scale,
            "acquisition_factor": self.acquisition_factor,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScaleProfile":
        return cls(
            d["name"],
            float(d["sample_rate_hz"]),
            int(d["frame_length"]),
            int(d["segment_length"]),
            float(d.get("time_scale", 1.0)),
            int(d.get("acquisition_factor", 4)),
        )


PAPER_PROFILE = ScaleProfile("paper", 14e6, 2**20, 1024, 1.0, 4)
DESK_PROFILE = ScaleProfile("desk", 250e3, 4096, 64, 1.0, 4)
PROFILES = {"paper": PAPER_PROFILE, "desk": DESK_PROFILE}


@dataclass(frozen=True)
class TransmitterModel:
    """Macro-parameters of one transmitter at the 14 MHz reference bandwidth."""

    label: str
    channel_spacing_hz: float
    burst_durations_s: tuple
    repetition_s: float | tuple
    center_offset_hz: float = 0.0
    burst_bandwidth_hz: float | None = None

    def __post_init__(self):
        durs = tuple(float(d) for d in np.atleast_1d(self.burst_durations_s))
        object.__setattr__(self, "burst_durations_s", durs)
        rep = self.repetition_s
        if isinstance(rep, (list, tuple)):
            rep = (float(rep[0]), float(rep[1]))
            if not 0 < rep[0] <= rep[1]:
                raise ConfigurationError(f"{self.label}: bad repetition range {rep}")
        else:
            rep = float(rep)
        object.__setattr__(self, "repetition_s", rep)
        if self.burst_bandwidth_hz is None:
            object.__setattr__(self, "burst_bandwidth_hz", 0.8 * self.channel_spacing_hz)
        if min(durs) <= 0 or max(durs) >= self.repetition_min_s:
            raise ConfigurationError(f"{self.label}: burst duration must be below repetition period")
        if not 0 < self.burst_bandwidth_hz <= self.channel_spacing_hz:
            raise ConfigurationError(f"{self.label}: bandwidth must not exceed channel spacing")

    @property
    def repetition_min_s(self) -> float:
        rep = self.repetition_s
        return rep[0] if isinstance(rep, tuple) else rep

    @property
    def mean_duration_s(self) -> float:
        return float(np.mean(self.burst_durations_s))

    def symbol_rate_hz(self, profile: ScaleProfile) -> float:
        return self.burst_bandwidth_hz * profile.freq_scale / BANDWIDTH_PER_SYMBOL_RATE

    def channel_frequencies(self, profile: ScaleProfile) -> np.ndarray:
        """Centre frequencies (Hz, baseband) of the grid channels fitting the usable band."""
        fs = profile.freq_scale
        spacing = self.channel_spacing_hz * fs
        offset = self.center_offset_hz * fs
        half_bw = 0.5 * self.burst_bandwidth_hz * fs
        limit = 0.5 * USABLE_BAND_FRACTION * profile.sample_rate_hz - half_bw
        lo = int(np.ceil((-limit - offset) / spacing))
        hi = int(np.floor((limit - offset) / spacing))
        if hi < lo:
            raise ConfigurationError(f"{self.label}: no channel fits the profile band")
        return offset + spacing * np.arange(lo, hi + 1)


@dataclass(frozen=True)
class NoiseModel:
    """Interference generator; rates/durations/bandwidths are in reference units."""

    kind: str = "Gaussian"
    variance: float = 1.0
    floor_power: float = 0.02
    bt_rate_hz: float = 250.0
    bt_duration_s: float = 366e-6
    bt_bandwidth_hz: float = 1.0e6
    bt_power: float = 1.0
    wifi_rate_hz: float = 40.0
    wifi_duration_s: tuple = (0.2e-3, 1.5e-3)
    wifi_bandwidth_hz: float = 16.6e6
    wifi_power: float = 0.3

    def __post_init__(self):
        if self.kind not in ("Gaussian", "LabLike"):
            raise ConfigurationError(f"unknown noise kind {self.kind!r}")
        positive = [
            self.variance, self.floor_power, self.bt_rate_hz, self.bt_duration_s,
            self.bt_bandwidth_hz, self.bt_power, self.wifi_rate_hz, self.wifi_bandwidth_hz,
            self.wifi_power, *self.wifi_duration_s,
        ]
        if min(positive) <= 0:
            raise ConfigurationError("noise model rates, durations and powers must be positive")


GAUSSIAN_NOISE = NoiseModel("Gaussian")
LAB_NOISE = NoiseModel("LabLike")


@dataclass(frozen=True)
class Burst:
    frame: IqFrame
    mask: BurstMask
    channel_hz: float
    duration_s: float


def load_transmitter_table(path: str | Path | None = None) -> dict[str, TransmitterModel]:
    """Read a transmitter table (JSON, Table-II style columns) keyed by label."""
    if path is None:
        text = resources.files("dronerf").joinpath("data/transmitters.json").read_text()
    else:
        text = Path(path).read_text()
    doc = json.loads(text)
    band_center_hz = doc.get("band_center_ghz", BAND_CENTER_HZ / 1e9) * 1e9
    frac = doc.get("bandwidth_fraction", 0.8)
    models = {}
    for row in doc["transmitters"]:
        rep = row["repetition_ms"]
        rep = tuple(r * 1e-3 for r in rep) if isinstance(rep, list) else rep * 1e-3
        spacing = row["spacing_mhz"] * 1e6
        models[row["label"]] = TransmitterModel(
            label=row["label"],
            channel_spacing_hz=spacing,
            burst_durations_s=tuple(d * 1e-3 for d in row["duration_ms"]),
            repetition_s=rep,
            center_offset_hz=row["center_freq_ghz"] * 1e9 - band_center_hz,
            burst_bandwidth_hz=row.get("bandwidth_mhz", frac * row["spacing_mhz"]) * 1e6,
        )
    return models


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def gaussian_pulse(bt: float, sps: float, span: int = 3) -> np.ndarray:
    sigma = np.sqrt(np.log(2.0)) / (2 * np.pi * bt) * sps
    half = int(np.ceil(span * sps))
    t = np.arange(-half, half + 1)
    g = np.exp(-0.5 * (t / sigma) ** 2)
    return g / g.sum()


def gfsk(n: int, sps: float, rng: np.random.Generator, bt=GFSK_BT, h=GFSK_INDEX) -> np.ndarray:
    """Constant-envelope GFSK baseband of ``n`` samples with random bits."""
    n_sym = int(np.ceil(n / sps)) + 1
    bits = rng.integers(0, 2, n_sym) * 2.0 - 1.0
    nrz = bits[(np.arange(n) / sps).astype(np.int64)]
    g = gaussian_pulse(bt, sps)
    half = g.size // 2
    freq = np.convolve(nrz, g)[half : half + n]
    phase = np.cumsum(np.pi * h / sps * freq)
    return np.exp(1j * phase)


def ramp_envelope(n: int, ramp: int) -> np.ndarray:
    ramp = max(1, min(ramp, n // 4))
    env = np.ones(n)
    r = 0.5 - 0.5 * np.cos(np.pi * (np.arange(ramp) + 0.5) / ramp)
    env[:ramp] = r
    env[n - ramp :] = r[::-1]
    return env


def synth_burst(
    model: TransmitterModel,
    profile: ScaleProfile,
    rng_seed=None,
    *,
    rate_hz: float | None = None,
    duration_s: float | None = None,
    channel_hz: float | None = None,
) -> Burst:
    """One unit-carrier-power burst on a random grid channel.

    ``rate_hz`` overrides the sample rate (used when synthesising above the
    profile rate before decimation); durations still follow ``profile.time_scale``.
    """
    rng = _rng(rng_seed)
    fs = profile.sample_rate_hz if rate_hz is None else rate_hz
    if duration_s is None:
        duration_s = float(rng.choice(model.burst_durations_s))
    n = int(round(duration_s * profile.time_scale * fs))
    frame_cap = profile.frame_length * fs / profile.sample_rate_hz
    if n > frame_cap:
        raise ConfigurationError(f"{model.label}: {n}-sample burst exceeds frame at profile {profile.name}")
    if n < 1:
        raise ConfigurationError(f"{model.label}: burst shorter than one sample")
    if channel_hz is None:
        channel_hz = float(rng.choice(model.channel_frequencies(profile)))
    sps = fs / model.symbol_rate_hz(profile)
    base = gfsk(n, sps, rng) * ramp_envelope(n, int(round(sps)))
    phi0 = rng.uniform(0, 2 * np.pi)
    x = base * np.exp(1j * (2 * np.pi * channel_hz / fs * np.arange(n) + phi0))
    x /= np.sqrt(np.mean(np.abs(x) ** 2))
    return Burst(IqFrame(x.astype(np.complex64), fs), BurstMask.full(n), channel_hz, duration_s)


def synth_transmission_schedule(
    model: TransmitterModel,
    profile: ScaleProfile,
    total_duration_s: float,
    rng_seed=None,
    offset_s: float = 0.0,
) -> list[float]:
    """Burst start times (s, profile time) in ``[offset_s, total_duration_s)``."""
    if not total_duration_s > 0:
        raise InvalidInputError("total_duration_s must be positive")
    rng = _rng(rng_seed)
    ts = profile.time_scale
    rep = model.repetition_s
    starts = []
    t = offset_s
    k = 0
    while t < total_duration_s - 1e-12:
        starts.append(t)
        if isinstance(rep, tuple):
            t += rng.uniform(rep[0], rep[1]) * ts
        else:
            k += 1
            # multiply instead of accumulate to avoid drift
            t = offset_s + k * rep * ts
    return starts


def _bandlimited_noise(n: int, bw_frac: float, center_frac: float, rng) -> np.ndarray:
    w = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    spec = np.fft.fft(w)
    f = np.fft.fftfreq(n)
    spec[np.abs(f - center_frac) > bw_frac / 2] = 0
    y = np.fft.ifft(spec)
    p = np.mean(np.abs(y) ** 2)
    return y / np.sqrt(p) if p > 0 else y


def synth_noise(model: NoiseModel, profile: ScaleProfile, length: int, rng_seed=None, *, rate_hz=None) -> IqFrame:
    if length <= 0:
        raise InvalidInputError("length must be positive")
    rng = _rng(rng_seed)
    fs = profile.sample_rate_hz if rate_hz is None else rate_hz
    if model.kind == "Gaussian":
        s = np.sqrt(model.variance / 2)
        x = s * (rng.standard_normal(length) + 1j * rng.standard_normal(length))
        return IqFrame(x.astype(np.complex64), fs)

    ts = profile.time_scale
    fscale = profile.freq_scale
    half_band = 0.5 * USABLE_BAND_FRACTION * profile.sample_rate_hz
    s = np.sqrt(model.floor_power / 2)
    x = s * (rng.standard_normal(length) + 1j * rng.standard_normal(length))
    dur_total = length / fs

    # short narrowband hopping bursts (bluetooth-like)
    bt_bw = model.bt_bandwidth_hz * fscale
    n_bt = rng.poisson(model.bt_rate_hz / ts * dur_total)
    bt_len = max(1, int(round(model.bt_duration_s * ts * fs)))
    sps = fs * BANDWIDTH_PER_SYMBOL_RATE / bt_bw
    for _ in range(n_bt):
        start = int(rng.integers(-bt_len + 1, length))
        fc = rng.uniform(-half_band + bt_bw / 2, half_band - bt_bw / 2)
        b = gfsk(bt_len, sps, rng, h=0.32) * ramp_envelope(bt_len, int(round(sps)))
        b = b * np.exp(1j * (2 * np.pi * fc / fs * np.arange(bt_len) + rng.uniform(0, 2 * np.pi)))
        a, e = max(start, 0), min(start + bt_len, length)
        x[a:e] += np.sqrt(model.bt_power) * b[a - start : e - start]

    # longer wideband bursts (wifi-like)
    wifi_bw = min(model.wifi_bandwidth_hz * fscale, 2 * half_band)
    n_wifi = rng.poisson(model.wifi_rate_hz / ts * dur_total)
    for _ in range(n_wifi):
        dur = rng.uniform(*model.wifi_duration_s) * ts
        wl = max(8, int(round(dur * fs)))
        start = int(rng.integers(-wl + 1, length))
        room = max(0.0, half_band - wifi_bw / 2)
        fc = rng.uniform(-room, room) if room > 0 else 0.0
        b = _bandlimited_noise(wl, wifi_bw / fs, fc / fs, rng) * ramp_envelope(wl, wl // 16)
        a, e = max(start, 0), min(start + wl, length)
        x[a:e] += np.sqrt(model.wifi_power) * b[a - start : e - start]
    return IqFrame(x.astype(np.complex64), fs)


def occupied_bandwidth(samples: np.ndarray, sample_rate_hz: float, fraction: float = 0.99) -> float:
    """Width of the narrowest contiguous band holding ``fraction`` of the power."""
    n = 1 << int(np.ceil(np.log2(max(len(samples), 2) * 8)))
    p = np.abs(np.fft.fftshift(np.fft.fft(samples, n))) ** 2
    c = np.concatenate(([0.0], np.cumsum(p)))
    total = c[-1]
    need = fraction * total
    best = n
    j = 0
    for i in range(n):
        while j < n and c[j + 1] - c[i] < need:
            j += 1
        if j >= n:
            break
        best = min(best, j - i + 1)
    return best * sample_rate_hz / n
