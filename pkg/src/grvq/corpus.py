"""Seeded synthetic "speech-like" corpus: voiced harmonic segments with
moving formants, fricative noise bursts and pauses."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .frontend import AudioSignal
from .wavio import write_wav

# Rough vowel formant targets (F1, F2, F3) in Hz.
_VOWELS = np.array([
    [730, 1090, 2440],
    [270, 2290, 3010],
    [530, 1840, 2480],
    [570, 840, 2410],
    [300, 870, 2240],
    [660, 1720, 2410],
])


def _formant_gain(freqs: np.ndarray, formants: np.ndarray, bandwidth: float = 120.0) -> np.ndarray:
    gain = np.zeros_like(freqs)
    for f in formants:
        gain += 1.0 / (1.0 + ((freqs - f) / bandwidth) ** 2)
    return gain


def speech_like(duration: float, sample_rate: int, seed: int) -> AudioSignal:
    rng = np.random.default_rng(seed)
    n = int(round(duration * sample_rate))
    t = np.arange(n) / sample_rate
    out = np.zeros(n)
    pos = 0
    base_f0 = rng.uniform(100.0, 220.0)
    nyquist = sample_rate / 2
    while pos < n:
        kind = rng.choice(3, p=[0.65, 0.2, 0.15])
        seg = int(rng.uniform(0.08, 0.35) * sample_rate)
        end = min(n, pos + seg)
        m = end - pos
        if m <= 0:
            break
        env = np.sin(np.pi * np.arange(m) / m) ** 0.7
        if kind == 0:
            f0 = base_f0 * (1.0 + 0.15 * np.sin(2 * np.pi * rng.uniform(0.5, 3.0) * t[pos:end]
                                                 + rng.uniform(0, 2 * np.pi)))
            f0 *= np.linspace(1.0, rng.uniform(0.85, 1.15), m)
            phase = 2 * np.pi * np.cumsum(f0) / sample_rate
            v0, v1 = _VOWELS[rng.integers(len(_VOWELS), size=2)]
            mix = np.linspace(0.0, 1.0, m)[:, None]
            formants = (1 - mix) * v0 + mix * v1
            voiced = np.zeros(m)
            for h in range(1, 40):
                hf = h * f0
                gain = _formant_gain(hf, formants.T) / h ** 0.5
                gain[hf >= nyquist] = 0.0
                voiced += gain * np.sin(h * phase)
            voiced /= max(np.max(np.abs(voiced)), 1e-9)
            out[pos:end] += 0.5 * env * voiced
        elif kind == 1:
            noise = rng.standard_normal(m)
            # Crude high-pass: first difference emphasises fricative energy.
            noise = np.diff(noise, prepend=0.0)
            out[pos:end] += 0.08 * env * noise / 2.0
        pos = end
    out += 0.002 * rng.standard_normal(n)
    peak = np.max(np.abs(out))
    if peak > 0.95:
        out *= 0.95 / peak
    return AudioSignal(out, sample_rate)


def write_corpus(directory, n_files: int = 20, duration: float = 10.0,
                 sample_rate: int = 24000, seed: int = 42) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    seeds = np.random.SeedSequence(seed).generate_state(n_files)
    paths = []
    for i, s in enumerate(seeds):
        path = directory / f"synth_{i:03d}.wav"
        write_wav(path, speech_like(duration, sample_rate, int(s)))
        paths.append(path)
    return paths
