"""Mono 16-bit PCM WAV I/O and atomic file writes."""

from __future__ import annotations

import io
import os
import tempfile
import wave
from pathlib import Path

import numpy as np

from .errors import CodecIOError, WavFormatError
from .frontend import AudioSignal

SUPPORTED_RATES = (16000, 24000)


def atomic_write_bytes(path, data: bytes) -> None:
    """Write via a temp file in the target directory and rename into place."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_wav(path) -> AudioSignal:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise CodecIOError(f"cannot read {path}: {exc}") from exc
    try:
        with wave.open(io.BytesIO(raw), "rb") as w:
            channels = w.getnchannels()
            width = w.getsampwidth()
            rate = w.getframerate()
            frames = w.readframes(w.getnframes())
    except (wave.Error, EOFError) as exc:
        raise WavFormatError(path, "container", str(exc), "RIFF/WAVE PCM") from exc
    if channels != 1:
        raise WavFormatError(path, "channels", channels, "1")
    if width != 2:
        raise WavFormatError(path, "sample_width", width * 8, "16-bit")
    if rate not in SUPPORTED_RATES:
        raise WavFormatError(path, "sample_rate", rate, SUPPORTED_RATES)
    pcm = np.frombuffer(frames, dtype="<i2")
    return AudioSignal(pcm.astype(np.float64) / 32768.0, rate)


def wav_bytes(signal: AudioSignal) -> bytes:
    if signal.sample_rate not in SUPPORTED_RATES:
        raise WavFormatError("<output>", "sample_rate", signal.sample_rate, SUPPORTED_RATES)
    pcm = np.clip(np.round(signal.samples * 32768.0), -32768, 32767).astype("<i2")
    buf = io.BytesIO()
    with wave.open(buf, "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(signal.sample_rate)
        w.writeframes(pcm.tobytes())
    return buf.getvalue()


def write_wav(path, signal: AudioSignal) -> None:
    atomic_write_bytes(path, wav_bytes(signal))


def list_wavs(directory) -> list[Path]:
    directory = Path(directory)
    if not directory.is_dir():
        raise CodecIOError(f"{directory} is not a directory")
    return sorted(p for p in directory.iterdir() if p.suffix.lower() == ".wav" and p.is_file())
