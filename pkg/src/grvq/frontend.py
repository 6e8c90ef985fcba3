"""Analysis/synthesis front-end and distortion metrics.

The codec replaces a learned encoder/decoder with a sine-window MDCT at 50%
overlap.  With ``frame_size = N`` the hop is ``M = N/2`` and each frame yields
``M`` coefficients, so the transform is critically sampled and the hop is the
downsample factor (480 at 24 kHz gives 100 frames per second).

Feature matrices are plain ``(frames, dims)`` float32 numpy arrays.  Signals
and metrics are computed in float64.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .errors import (
    ConfigurationError,
    DegenerateInputError,
    DomainError,
    EmptyInputError,
    ShapeError,
)

SNR_CAP_DB = 200.0
DEFAULT_MEL_SCALES = (128, 256, 512, 1024, 2048)
DEFAULT_N_MELS = 64


@dataclass(frozen=True, eq=False)
class AudioSignal:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.ascontiguousarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ShapeError(f"expected mono samples, got shape {samples.shape}")
        if int(self.sample_rate) <= 0:
            raise ConfigurationError(f"sample_rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(samples)):
            raise DomainError("signal contains non-finite samples")
        samples.flags.writeable = False
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate


@dataclass(frozen=True, eq=False)
class MelSpec:
    values: np.ndarray  # (frames, n_mels), magnitude domain
    window_len: int
    hop: int
    n_mels: int


def as_features(x, dims: int | None = None) -> np.ndarray:
    """Validate and return a contiguous float32 ``(frames, dims)`` matrix."""
    arr = np.asarray(x)
    if arr.ndim != 2:
        raise ShapeError(f"feature matrix must be 2-D, got shape {arr.shape}")
    arr = np.ascontiguousarray(arr, dtype=np.float32)
    if arr.shape[1] == 0:
        raise ShapeError("feature matrix must have at least one dimension")
    if dims is not None and arr.shape[1] != dims:
        raise ShapeError(f"expected {dims} feature dims, got {arr.shape[1]}")
    if not np.all(np.isfinite(arr)):
        raise DomainError("feature matrix contains non-finite values")
    return arr


def _check_frame_size(frame_size: int) -> int:
    frame_size = int(frame_size)
    if frame_size < 4 or frame_size % 2:
        raise ConfigurationError(f"frame_size must be even and >= 4, got {frame_size}")
    return frame_size


@lru_cache(maxsize=16)
def _mdct_basis(frame_size: int) -> np.ndarray:
    # Orthonormal lapped basis: rows are time samples, columns are bins.
    n_fft = frame_size
    hop = n_fft // 2
    n = np.arange(n_fft)[:, None]
    k = np.arange(hop)[None, :]
    window = np.sin(np.pi * (n + 0.5) / n_fft)
    basis = np.sqrt(2.0 / hop) * window * np.cos(np.pi / hop * (n + 0.5 + hop / 2) * (k + 0.5))
    basis.flags.writeable = False
    return basis


def frame_count(n_samples: int, frame_size: int) -> int:
    hop = _check_frame_size(frame_size) // 2
    return -(-n_samples // hop) + 1


def mdct_analyze(signal: AudioSignal, frame_size: int) -> np.ndarray:
    """Sine-window MDCT with 50% overlap.

    The signal is zero padded by one hop on the left and up to a whole number
    of hops on the right, giving ``ceil(len / hop) + 1`` frames of ``hop``
    coefficients each.
    """
    frame_size = _check_frame_size(frame_size)
    if len(signal) == 0:
        raise EmptyInputError("cannot analyze an empty signal")
    hop = frame_size // 2
    n_frames = frame_count(len(signal), frame_size)
    padded = np.zeros((n_frames + 1) * hop)
    padded[hop:hop + len(signal)] = signal.samples
    frames = np.lib.stride_tricks.sliding_window_view(padded, frame_size)[::hop][:n_frames]
    return np.ascontiguousarray(frames @ _mdct_basis(frame_size), dtype=np.float32)


def mdct_synthesize(features, frame_size: int, sample_rate: int = 24000) -> AudioSignal:
    """Inverse of :func:`mdct_analyze` by windowed overlap-add.

    Returns ``(frames - 1) * hop`` samples; callers trim to the original length.
    """
    frame_size = _check_frame_size(frame_size)
    hop = frame_size // 2
    feats = as_features(features, dims=hop)
    n_frames = feats.shape[0]
    if n_frames < 2:
        return AudioSignal(np.zeros(0), sample_rate)
    blocks = feats.astype(np.float64) @ _mdct_basis(frame_size).T
    out = np.zeros((n_frames + 1) * hop)
    out[: n_frames * hop] += blocks[:, :hop].ravel()
    out[hop:] += blocks[:, hop:].ravel()
    return AudioSignal(out[hop: n_frames * hop], sample_rate)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@lru_cache(maxsize=64)
def mel_filterbank(sample_rate: int, n_fft: int, n_mels: int) -> np.ndarray:
    """HTK-scale triangular filters, unit peak, shape ``(n_fft//2 + 1, n_mels)``.

    Bands narrower than the FFT bin spacing can come out empty; that is
    expected for short windows and leaves those mel bins at zero.
    """
    fft_freqs = np.linspace(0.0, sample_rate / 2, n_fft // 2 + 1)
    edges = mel_to_hz(np.linspace(0.0, hz_to_mel(sample_rate / 2), n_mels + 2))
    lower, center, upper = edges[:-2], edges[1:-1], edges[2:]
    f = fft_freqs[:, None]
    rising = (f - lower) / (center - lower)
    falling = (upper - f) / (upper - center)
    fb = np.maximum(0.0, np.minimum(rising, falling))
    fb.flags.writeable = False
    return fb


def mel_spectrogram(
    signal: AudioSignal, window_len: int, hop: int | None = None, n_mels: int = DEFAULT_N_MELS
) -> MelSpec:
    window_len = int(window_len)
    if window_len < 2 or window_len & (window_len - 1):
        raise ConfigurationError(f"window_len must be a power of two, got {window_len}")
    hop = max(1, window_len // 4) if hop is None else int(hop)
    if not 0 < hop <= window_len:
        raise ConfigurationError(f"hop must be in (0, {window_len}], got {hop}")
    if n_mels < 1:
        raise ConfigurationError(f"n_mels must be >= 1, got {n_mels}")

    half = window_len // 2
    padded = np.concatenate([np.zeros(half), signal.samples, np.zeros(half)])
    frames = np.lib.stride_tricks.sliding_window_view(padded, window_len)[::hop]
    window = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(window_len) / window_len)
    magnitude = np.abs(np.fft.rfft(frames * window, axis=-1))
    values = magnitude @ mel_filterbank(signal.sample_rate, window_len, n_mels)
    return MelSpec(values, window_len, hop, n_mels)


def check_pair(reference: AudioSignal, estimate: AudioSignal) -> None:
    if len(reference) != len(estimate):
        raise ShapeError(f"length mismatch: {len(reference)} vs {len(estimate)}")
    if reference.sample_rate != estimate.sample_rate:
        raise ShapeError(
            f"sample rate mismatch: {reference.sample_rate} vs {estimate.sample_rate}"
        )


def snr_db(reference: AudioSignal, estimate: AudioSignal) -> float:
    """Signal-to-noise ratio in dB, capped at ``SNR_CAP_DB`` for exact matches."""
    check_pair(reference, estimate)
    signal_energy = float(np.sum(reference.samples ** 2))
    if signal_energy == 0.0:
        raise DegenerateInputError("reference signal has zero energy")
    noise_energy = float(np.sum((reference.samples - estimate.samples) ** 2))
    if noise_energy == 0.0:
        return SNR_CAP_DB
    return min(SNR_CAP_DB, 10.0 * np.log10(signal_energy / noise_energy))


def spectral_l1_l2(a: np.ndarray, b: np.ndarray) -> float:
    diff = a - b
    return float(np.mean(np.abs(diff)) + np.mean(diff ** 2))


def mel_distance(
    reference: AudioSignal,
    estimate: AudioSignal,
    scales: Sequence[int] = DEFAULT_MEL_SCALES,
    n_mels: int = DEFAULT_N_MELS,
) -> float:
    """Mean over window lengths of L1 + L2 (mean-squared) mel distance.

    Each scale uses hop = window/4.
    """
    check_pair(reference, estimate)
    if len(scales) == 0:
        raise ConfigurationError("at least one mel scale is required")
    total = 0.0
    for window_len in scales:
        ref_mel = mel_spectrogram(reference, window_len, n_mels=n_mels).values
        est_mel = mel_spectrogram(estimate, window_len, n_mels=n_mels).values
        total += spectral_l1_l2(ref_mel, est_mel)
    return total / len(scales)
