"""Training, coding, evaluation and rate-distortion benchmarking drivers.

These functions do the work behind the command line verbs.  Each one is
deterministic for a fixed :class:`RunConfig` and writes output files
atomically.
"""

from __future__ import annotations

import csv
import io
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .bitstream import (
    CodecConfig,
    StreamHeader,
    bitrate_of,
    bits_for_entries,
    decode_payload,
    deserialize_model,
    encode_payload,
    serialize_model,
)
from .errors import (
    CodecIOError,
    CompatibilityError,
    ConfigurationError,
    EmptyCorpusError,
    InsufficientCorpusError,
)
from .frontend import DEFAULT_MEL_SCALES, AudioSignal, mdct_analyze, mdct_synthesize, mel_distance, snr_db
from .losses import LossWeights
from .quantizer import FitConfig, GrvqModel, fit_grvq, grvq_apply, grvq_decode
from .wavio import SUPPORTED_RATES, atomic_write_bytes, list_wavs, read_wav, write_wav

EVAL_COLUMNS = ("file", "sample_rate", "downsample", "n_codebooks", "bitrate_bps", "snr_db", "mel_distance")
BENCH_COLUMNS = (
    "config", "label", "groups", "stages", "entries", "frame_size", "sample_rate", "downsample",
    "n_codebooks", "bitrate_bps", "train_mse", "snr_db", "mel_distance",
)
MIN_BENCH_FILES = 5


@dataclass
class RunConfig:
    sample_rate: int = 24000
    frame_size: int = 480
    groups: int = 2
    stages: int = 2
    entries: int = 1024
    epochs: int = 10
    decay: float = 0.99
    seed: int = 42
    kmeans_iterations: int = 25
    reserve_zero_entry: bool = False
    mel_scales: tuple = DEFAULT_MEL_SCALES
    loss_weights: LossWeights = field(default_factory=LossWeights)
    grid: tuple = ()

    def validate(self) -> "RunConfig":
        if self.sample_rate not in SUPPORTED_RATES:
            raise ConfigurationError(f"sample_rate must be one of {SUPPORTED_RATES}, got {self.sample_rate}")
        if self.frame_size < 4 or self.frame_size % 2:
            raise ConfigurationError(f"frame_size must be even and >= 4, got {self.frame_size}")
        if (self.frame_size // 2) % self.groups:
            raise ConfigurationError(
                f"{self.frame_size // 2} coefficients per frame do not split into {self.groups} groups"
            )
        if not self.mel_scales:
            raise ConfigurationError("mel_scales must not be empty")
        self.fit_config().validate()
        for point in self.grid:
            if len(point) != 4:
                raise ConfigurationError(f"grid points are (groups, stages, entries, frame_size), got {point}")
        return self

    def fit_config(self, groups=None, stages=None, entries=None) -> FitConfig:
        return FitConfig(
            groups=groups or self.groups,
            stages=stages or self.stages,
            entries=entries or self.entries,
            epochs=self.epochs,
            decay=self.decay,
            seed=self.seed,
            kmeans_iterations=self.kmeans_iterations,
            reserve_zero_entry=self.reserve_zero_entry,
        )

    def as_dict(self) -> dict:
        d = asdict(self)
        d["mel_scales"] = list(self.mel_scales)
        d["grid"] = [list(p) for p in self.grid]
        return d

    @classmethod
    def from_sources(cls, config_path=None, **overrides) -> "RunConfig":
        """Build from an optional JSON file; non-None keyword overrides win."""
        values: dict = {}
        if config_path is not None:
            try:
                values = json.loads(Path(config_path).read_text())
            except OSError as exc:
                raise CodecIOError(f"cannot read config {config_path}: {exc}") from exc
            except json.JSONDecodeError as exc:
                raise ConfigurationError(f"{config_path}: invalid JSON ({exc})") from exc
            if not isinstance(values, dict):
                raise ConfigurationError(f"{config_path}: top level must be an object")
        values.update({k: v for k, v in overrides.items() if v is not None})
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        if "loss_weights" in values and isinstance(values["loss_weights"], dict):
            values["loss_weights"] = LossWeights(**values["loss_weights"])
        if "mel_scales" in values:
            values["mel_scales"] = tuple(int(s) for s in values["mel_scales"])
        if "grid" in values:
            values["grid"] = tuple(tuple(int(v) for v in p) for p in values["grid"])
        try:
            cfg = cls(**values)
        except TypeError as exc:
            raise ConfigurationError(str(exc)) from exc
        return cfg.validate()


def threads_from_env() -> int:
    raw = os.environ.get("GRVQ_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError as exc:
        raise ConfigurationError(f"GRVQ_THREADS must be an integer, got {raw!r}") from exc


def load_corpus(inputs, sample_rate: int) -> list[tuple[Path, AudioSignal]]:
    paths: list[Path] = []
    for item in inputs:
        item = Path(item)
        paths.extend(list_wavs(item) if item.is_dir() else [item])
    if not paths:
        raise EmptyCorpusError(f"no WAV files found in {', '.join(map(str, inputs))}")
    corpus = []
    for p in paths:
        sig = read_wav(p)
        if sig.sample_rate != sample_rate:
            raise ConfigurationError(f"{p}: sample rate {sig.sample_rate} != configured {sample_rate}")
        corpus.append((p, sig))
    return corpus


def corpus_features(signals, frame_size: int) -> np.ndarray:
    mats = [mdct_analyze(s, frame_size) for s in signals if len(s)]
    if not mats:
        raise EmptyCorpusError("corpus contains no audio samples")
    return np.concatenate(mats, axis=0)


def train(cfg: RunConfig, inputs) -> tuple[GrvqModel, dict]:
    corpus = load_corpus(inputs, cfg.sample_rate)
    feats = corpus_features([s for _, s in corpus], cfg.frame_size)
    model, fit_report = fit_grvq(feats, cfg.fit_config(), cfg.sample_rate, cfg.frame_size)
    report = {
        "config": cfg.as_dict(),
        "files": [p.name for p, _ in corpus],
        "frames": int(feats.shape[0]),
        "bitrate_bps": bitrate_of(CodecConfig.for_model(model)),
        **fit_report.as_dict(),
    }
    return model, report


def encode_signal(model: GrvqModel, signal: AudioSignal) -> bytes:
    if signal.sample_rate != model.sample_rate:
        raise ConfigurationError(
            f"signal sample rate {signal.sample_rate} != model sample rate {model.sample_rate}"
        )
    bits = bits_for_entries(model.codebook(0, 0).size)
    if len(signal) == 0:
        codes = np.zeros((0, model.n_codebooks), dtype=np.int64)
    else:
        codes, _ = grvq_apply(model, mdct_analyze(signal, model.frame_size))
    header = StreamHeader(
        sample_rate=model.sample_rate,
        frame_size=model.frame_size,
        groups=model.n_groups,
        stages=model.n_stages,
        bits_per_code=bits,
        frame_count=codes.shape[0],
        original_length=len(signal),
    )
    return encode_payload(header, codes)


def check_compatible(model: GrvqModel, header: StreamHeader) -> None:
    pairs = (
        ("sample_rate", model.sample_rate, header.sample_rate),
        ("frame_size", model.frame_size, header.frame_size),
        ("groups", model.n_groups, header.groups),
        ("stages", model.n_stages, header.stages),
        ("bits_per_code", bits_for_entries(model.codebook(0, 0).size), header.bits_per_code),
    )
    for name, m, s in pairs:
        if m != s:
            raise CompatibilityError(name, m, s)


def decode_stream(model: GrvqModel, data: bytes) -> AudioSignal:
    header, codes = decode_payload(data)
    check_compatible(model, header)
    if header.frame_count == 0:
        return AudioSignal(np.zeros(header.original_length), header.sample_rate)
    feats = grvq_decode(model, codes)
    out = mdct_synthesize(feats, model.frame_size, model.sample_rate).samples
    samples = np.zeros(header.original_length)
    n = min(len(out), header.original_length)
    samples[:n] = out[:n]
    return AudioSignal(samples, header.sample_rate)


def read_model(path) -> GrvqModel:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise CodecIOError(f"cannot read model {path}: {exc}") from exc
    return deserialize_model(data)


def encode_file(model_path, wav_path, out_path) -> dict:
    model = read_model(model_path)
    signal = read_wav(wav_path)
    data = encode_signal(model, signal)
    atomic_write_bytes(out_path, data)
    return {"bytes": len(data), "bitrate_bps": bitrate_of(CodecConfig.for_model(model))}


def decode_file(model_path, stream_path, out_path) -> AudioSignal:
    model = read_model(model_path)
    try:
        data = Path(stream_path).read_bytes()
    except OSError as exc:
        raise CodecIOError(f"cannot read stream {stream_path}: {exc}") from exc
    signal = decode_stream(model, data)
    write_wav(out_path, signal)
    return signal


def _metrics(model: GrvqModel, signal: AudioSignal, mel_scales) -> tuple[float, float]:
    recon = decode_stream(model, encode_signal(model, signal))
    return snr_db(signal, recon), mel_distance(signal, recon, mel_scales)


def evaluate(model: GrvqModel, corpus, mel_scales=DEFAULT_MEL_SCALES) -> list[dict]:
    codec = CodecConfig.for_model(model)
    rows = []
    for path, signal in corpus:
        snr, mel = _metrics(model, signal, mel_scales)
        rows.append({
            "file": Path(path).name,
            "sample_rate": model.sample_rate,
            "downsample": codec.downsample,
            "n_codebooks": model.n_codebooks,
            "bitrate_bps": bitrate_of(codec),
            "snr_db": snr,
            "mel_distance": mel,
        })
    if rows:
        mean = {"file": "MEAN"}
        for col in EVAL_COLUMNS[1:]:
            mean[col] = float(np.mean([r[col] for r in rows]))
        rows.append(mean)
    return rows


def rows_to_csv(rows, columns) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({c: _fmt(row[c]) for c in columns})
    return buf.getvalue()


def _fmt(value):
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, np.integer):
        return int(value)
    return value


def format_table(rows, columns) -> str:
    cells = [[str(c) for c in columns]]
    for row in rows:
        cells.append([f"{row[c]:.4f}" if isinstance(row[c], float) else str(row[c]) for c in columns])
    widths = [max(len(r[i]) for r in cells) for i in range(len(columns))]
    lines = ["  ".join(v.rjust(w) for v, w in zip(r, widths)) for r in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


def split_corpus(n_files: int, seed: int, holdout: float = 0.2) -> tuple[list[int], list[int]]:
    """Seeded split by file: returns sorted (train, test) index lists."""
    perm = np.random.default_rng(seed).permutation(n_files)
    n_test = max(1, int(round(holdout * n_files)))
    return sorted(int(i) for i in perm[n_test:]), sorted(int(i) for i in perm[:n_test])


def default_grid(cfg: RunConfig) -> tuple:
    return ((1, 1, cfg.entries, cfg.frame_size),
            (1, 4, cfg.entries, cfg.frame_size),
            (2, 2, cfg.entries, cfg.frame_size))


def _bench_point(cfg: RunConfig, point, train_sigs, test_sigs, feature_cache) -> dict:
    groups, stages, entries, frame_size = point
    feats = feature_cache[frame_size]
    model, report = fit_grvq(
        feats, cfg.fit_config(groups, stages, entries), cfg.sample_rate, frame_size
    )
    codec = CodecConfig.for_model(model)
    metrics = [_metrics(model, s, cfg.mel_scales) for s in test_sigs]
    n_books = groups * stages
    return {
        "config": f"G={groups},N_q={stages},E={entries},frame={frame_size}",
        "label": f"{n_books} codebook" + ("s" if n_books != 1 else ""),
        "groups": groups,
        "stages": stages,
        "entries": entries,
        "frame_size": frame_size,
        "sample_rate": cfg.sample_rate,
        "downsample": codec.downsample,
        "n_codebooks": n_books,
        "bitrate_bps": bitrate_of(codec),
        "train_mse": report.train_mse,
        "snr_db": float(np.mean([m[0] for m in metrics])),
        "mel_distance": float(np.mean([m[1] for m in metrics])),
    }


def bench(cfg: RunConfig, corpus_dir, threads: int | None = None) -> dict:
    corpus = load_corpus([corpus_dir], cfg.sample_rate)
    if len(corpus) < MIN_BENCH_FILES:
        raise InsufficientCorpusError(
            f"bench needs at least {MIN_BENCH_FILES} files, found {len(corpus)}"
        )
    grid = tuple(cfg.grid) or default_grid(cfg)
    for point in grid:
        CodecConfig(cfg.sample_rate, (point[3] // 2,), point[0] * point[1], point[2])
        if (point[3] // 2) % point[0]:
            raise ConfigurationError(f"grid point {point}: coefficients do not split into groups")
    train_idx, test_idx = split_corpus(len(corpus), cfg.seed)
    train_sigs = [corpus[i][1] for i in train_idx]
    test_sigs = [corpus[i][1] for i in test_idx]
    feature_cache = {fs: corpus_features(train_sigs, fs) for fs in sorted({p[3] for p in grid})}
    workers = min(threads or threads_from_env(), len(grid))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(
                lambda p: _bench_point(cfg, p, train_sigs, test_sigs, feature_cache), grid
            ))
    else:
        rows = [_bench_point(cfg, p, train_sigs, test_sigs, feature_cache) for p in grid]
    rows.sort(key=lambda r: (r["bitrate_bps"], r["mel_distance"]))
    return {
        "config": cfg.as_dict(),
        "train_files": [corpus[i][0].name for i in train_idx],
        "test_files": [corpus[i][0].name for i in test_idx],
        "rows": rows,
    }
