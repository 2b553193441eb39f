"""MFCC extraction and fixed-length aggregation of MFCC time series."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datamodel import Waveform


@dataclass(frozen=True)
class MfccConfig:
    frame_length: int = 1024
    hop: int = 512
    n_mels: int = 26
    n_mfcc: int = 13
    fmin: float = 0.0
    fmax: float | None = None  # None means sample_rate / 2
    log_floor: float = 1e-10

    def validate(self, sample_rate: float) -> float:
        """Check the config against ``sample_rate``; return the resolved fmax."""
        fmax = sample_rate / 2.0 if self.fmax is None else float(self.fmax)
        if self.n_mfcc > self.n_mels:
            raise ValueError(f"n_mfcc={self.n_mfcc} exceeds n_mels={self.n_mels}")
        if not 0 < self.hop <= self.frame_length:
            raise ValueError(f"hop={self.hop} must lie in (0, frame_length]")
        if not 0 <= self.fmin < fmax <= sample_rate / 2.0:
            raise ValueError(f"need 0 <= fmin < fmax <= {sample_rate / 2.0}, got {self.fmin}, {fmax}")
        if self.log_floor <= 0:
            raise ValueError("log_floor must be positive")
        return fmax


@dataclass(frozen=True)
class MfccMatrix:
    values: np.ndarray  # (frames, n_mfcc)
    config: MfccConfig
    sample_rate: float


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int, n_fft: int, sample_rate: float,
                   fmin: float = 0.0, fmax: float | None = None) -> np.ndarray:
    """Triangular mel filters of shape ``(n_mels, n_fft // 2 + 1)``.

    Filter centers are equally spaced on the mel scale between ``fmin`` and
    ``fmax``; each triangle rises from the previous center to 1.0 at its own
    center and falls to zero at the next one.  Triangles are evaluated at the
    exact bin frequencies ``k * sample_rate / n_fft`` (no bin snapping).
    """
    fmax = sample_rate / 2.0 if fmax is None else fmax
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    lower, center, upper = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs - lower) / (center - lower)
    falling = (upper - freqs) / (upper - center)
    fb = np.maximum(0.0, np.minimum(rising, falling))
    empty = ~(fb > 0).any(axis=1)
    if empty.any():
        bad = np.flatnonzero(empty).tolist()
        raise ValueError(f"mel filters {bad} contain no spectral bin; lower n_mels or raise n_fft")
    return fb


def mel_centers(n_mels: int, fmin: float, fmax: float) -> np.ndarray:
    return mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))[1:-1]


def dct_matrix(n: int) -> np.ndarray:
    """Orthonormal DCT-II matrix: ``y = D @ x``."""
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    d = np.cos(np.pi * k * (2 * i + 1) / (2 * n)) * np.sqrt(2.0 / n)
    d[0] /= np.sqrt(2.0)
    return d


def frame_signal(x: np.ndarray, frame_length: int, hop: int) -> np.ndarray:
    """Frames starting at 0, hop, 2*hop, ...; trailing partial frames dropped."""
    n_frames = 1 + (x.size - frame_length) // hop
    return np.lib.stride_tricks.sliding_window_view(x, frame_length)[::hop][:n_frames]


def hann(n: int) -> np.ndarray:
    # periodic Hann, the usual choice for spectral analysis
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def mfcc(w: Waveform, cfg: MfccConfig | None = None) -> MfccMatrix:
    cfg = cfg or MfccConfig()
    fmax = cfg.validate(w.sample_rate)
    x = np.asarray(w.samples, dtype=np.float64)
    if x.size < cfg.frame_length:
        raise ValueError(f"waveform of {x.size} samples is shorter than one frame ({cfg.frame_length})")
    frames = frame_signal(x, cfg.frame_length, cfg.hop) * hann(cfg.frame_length)
    power = np.abs(np.fft.rfft(frames, n=cfg.frame_length, axis=1)) ** 2
    fb = mel_filterbank(cfg.n_mels, cfg.frame_length, w.sample_rate, cfg.fmin, fmax)
    logmel = np.log(np.maximum(power @ fb.T, cfg.log_floor))
    coeffs = logmel @ dct_matrix(cfg.n_mels)[: cfg.n_mfcc].T
    return MfccMatrix(coeffs, cfg, w.sample_rate)


def aggregate(m: MfccMatrix | np.ndarray, method: str = "mean_std") -> np.ndarray:
    """Collapse frames into one vector: per-coefficient mean, optionally
    followed by per-coefficient population standard deviation."""
    v = m.values if isinstance(m, MfccMatrix) else np.asarray(m, dtype=np.float64)
    if v.ndim != 2 or v.shape[0] == 0:
        raise ValueError("cannot aggregate an empty MFCC matrix")
    # moments of the data shifted by its first frame: better conditioned,
    # and exact (mean = frame, std = 0) for constant columns
    d = v - v[0]
    mean = v[0] + d.mean(axis=0)
    if method == "mean":
        return mean
    if method == "mean_std":
        return np.concatenate([mean, d.std(axis=0)])
    raise ValueError(f"unknown aggregation method {method!r}")
