"""Two-plane complex spectrograms and the log-power view.

Conventions (recorded in dataset manifests): rectangular window, unitary FFT
(``1/sqrt(S)``), bins fft-shifted so row 0 is the most negative frequency.
Planes are laid out ``[2, S, C]``: plane 0 real, plane 1 imaginary, rows are
frequency bins, columns are consecutive segments.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, InvalidInputError
from .sigcore import IqFrame

FFT_CONVENTIONS = {"window": "rectangular", "norm": "unitary", "fft_shift": True, "layout": "plane,bin,segment"}


@dataclass(frozen=True)
class Spectrogram:
    planes: np.ndarray
    segment_length: int
    fft_shift: bool = True

    def __post_init__(self):
        p = np.asarray(self.planes)
        if p.ndim != 3 or p.shape[0] != 2 or p.shape[1] != self.segment_length:
            raise InvalidInputError(f"planes must be [2 x S x C], got {p.shape}")
        object.__setattr__(self, "planes", p)

    @property
    def columns(self) -> int:
        return self.planes.shape[2]

    def complex(self) -> np.ndarray:
        return self.planes[0] + 1j * self.planes[1]


@dataclass(frozen=True)
class PlaneStats:
    mean: tuple
    std: tuple

    def to_dict(self):
        return {"mean": [float(v) for v in self.mean], "std": [float(v) for v in self.std]}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["mean"]), tuple(d["std"]))


def complex_spectrogram(frame: IqFrame, S: int) -> Spectrogram:
    if S < 1 or S & (S - 1):
        raise InvalidInputError("segment length must be a power of two")
    if frame.length % S:
        raise InvalidInputError(f"frame length {frame.length} not divisible by {S}")
    x = frame.samples
    real_dtype = np.float64 if x.dtype == np.complex128 else np.float32
    cols = x.reshape(-1, S)
    spec = np.fft.fftshift(np.fft.fft(cols, axis=1, norm="ortho"), axes=1).T
    planes = np.stack([spec.real, spec.imag]).astype(real_dtype)
    return Spectrogram(planes, S, True)


def log_power(spec: Spectrogram, epsilon: float = 1e-12) -> np.ndarray:
    if not epsilon > 0:
        raise InvalidInputError("epsilon must be positive")
    re, im = spec.planes
    return np.log10(np.sqrt(re * re + im * im) + epsilon)


def power_normalize(planes: np.ndarray) -> np.ndarray:
    """Scale each sample of a ``[N, 2, S, C]`` batch to unit mean cell power.

    By Parseval this equals normalising the source frame to mean power 1, so a
    classifier sees the same input regardless of absolute receive level.
    """
    x = np.asarray(planes)
    p = np.mean(x.astype(np.float64) ** 2, axis=(1, 2, 3), keepdims=True) * 2
    p = np.where(p > 0, p, 1.0)
    return (x / np.sqrt(p)).astype(x.dtype)


def compute_plane_stats(planes: np.ndarray) -> PlaneStats:
    """Per-plane mean/std of a ``[N, 2, S, C]`` batch (use the training split only)."""
    x = np.asarray(planes, dtype=np.float64)
    mean = x.mean(axis=(0, 2, 3))
    std = x.std(axis=(0, 2, 3))
    return PlaneStats(tuple(mean), tuple(std))


def input_standardize(spec, stats: PlaneStats):
    """``(value - mean) / std`` per plane.

    Accepts a :class:`Spectrogram` or a raw ``[..., 2, S, C]`` array and returns
    the same kind.
    """
    std = np.asarray(stats.std, dtype=np.float64)
    if np.any(std <= 0):
        raise DegenerateInputError("plane standard deviation must be positive")
    mean = np.asarray(stats.mean, dtype=np.float64)
    if isinstance(spec, Spectrogram):
        p = spec.planes
        out = ((p - mean[:, None, None]) / std[:, None, None]).astype(p.dtype)
        return Spectrogram(out, spec.segment_length, spec.fft_shift)
    p = np.asarray(spec)
    out = (p - mean[:, None, None]) / std[:, None, None]
    return out.astype(p.dtype)
