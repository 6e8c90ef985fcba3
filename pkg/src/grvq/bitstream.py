"""Stream and model file formats, plus bitrate arithmetic.

``.grvq`` stream layout (little-endian, 32-byte header)::

    offset  size  field
    0       4     magic b"GRVQ"
    4       2     version (1)
    6       4     sample_rate
    10      4     frame_size
    14      2     groups
    16      2     stages
    18      2     bits_per_code
    20      4     frame_count
    24      8     original_length
    32      ...   codes, MSB-first, bits_per_code bits each, in frame / group /
                  stage order; the last byte is zero padded

``.grvm`` model layout (little-endian, 26-byte header)::

    0   4  magic b"GRVM"      14  2  groups
    4   2  version (1)        16  2  stages
    6   4  sample_rate        18  4  group dim d
    10  4  frame_size         22  4  entries E
    26  ... float32 entries in group / stage / entry / dimension order
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    ConfigurationError,
    EncodingError,
    FormatError,
    TruncationError,
    VersionError,
)
from .quantizer import GrvqModel, RvqStack
from .vq import Codebook

STREAM_MAGIC = b"GRVQ"
MODEL_MAGIC = b"GRVM"
STREAM_VERSION = 1
MODEL_VERSION = 1

_STREAM_HEADER = struct.Struct("<4sHIIHHHIQ")
_MODEL_HEADER = struct.Struct("<4sHIIHHII")
STREAM_HEADER_SIZE = _STREAM_HEADER.size
MODEL_HEADER_SIZE = _MODEL_HEADER.size

MAX_FRAMES = 1 << 31
MAX_CODEBOOKS = 64
MAX_PAYLOAD_BYTES = 1 << 30


def bits_for_entries(entries: int) -> int:
    """Bits needed to address ``entries`` codes (at least 1)."""
    if entries < 1:
        raise ConfigurationError(f"entries must be >= 1, got {entries}")
    return max(1, (entries - 1).bit_length())


@dataclass(frozen=True)
class StreamHeader:
    sample_rate: int
    frame_size: int
    groups: int
    stages: int
    bits_per_code: int
    frame_count: int
    original_length: int
    version: int = STREAM_VERSION

    @property
    def n_codebooks(self) -> int:
        return self.groups * self.stages

    @property
    def payload_bits(self) -> int:
        return self.frame_count * self.n_codebooks * self.bits_per_code

    @property
    def payload_bytes(self) -> int:
        return (self.payload_bits + 7) // 8

    def validate(self) -> "StreamHeader":
        if self.version != STREAM_VERSION:
            raise VersionError(f"unsupported stream version {self.version}")
        if self.sample_rate <= 0:
            raise FormatError(f"invalid sample_rate {self.sample_rate}")
        if self.frame_size < 4 or self.frame_size % 2:
            raise FormatError(f"invalid frame_size {self.frame_size}")
        if self.groups < 1 or self.stages < 1 or self.n_codebooks > MAX_CODEBOOKS:
            raise FormatError(f"invalid codebook layout {self.groups}x{self.stages}")
        if not 1 <= self.bits_per_code <= 16:
            raise FormatError(f"invalid bits_per_code {self.bits_per_code}")
        if not 0 <= self.frame_count <= MAX_FRAMES:
            raise FormatError(f"frame_count {self.frame_count} exceeds {MAX_FRAMES}")
        if self.payload_bytes > MAX_PAYLOAD_BYTES:
            raise FormatError(f"payload of {self.payload_bytes} bytes exceeds the 1 GiB cap")
        max_length = max(self.frame_count - 1, 0) * (self.frame_size // 2)
        if not 0 <= self.original_length <= max_length:
            raise FormatError(
                f"original_length {self.original_length} exceeds {max_length} samples "
                f"covered by {self.frame_count} frames"
            )
        return self

    def pack(self) -> bytes:
        return _STREAM_HEADER.pack(
            STREAM_MAGIC, self.version, self.sample_rate, self.frame_size, self.groups,
            self.stages, self.bits_per_code, self.frame_count, self.original_length,
        )


def pack_codes(codes: np.ndarray, bits: int) -> bytes:
    flat = np.asarray(codes, dtype=np.int64).ravel()
    shifts = np.arange(bits - 1, -1, -1, dtype=np.int64)
    bit_matrix = ((flat[:, None] >> shifts) & 1).astype(np.uint8)
    return np.packbits(bit_matrix.ravel()).tobytes()


def unpack_codes(payload: bytes, count: int, bits: int) -> np.ndarray:
    raw = np.unpackbits(np.frombuffer(payload, dtype=np.uint8))
    bit_matrix = raw[: count * bits].reshape(count, bits).astype(np.int64)
    weights = np.int64(1) << np.arange(bits - 1, -1, -1, dtype=np.int64)
    return bit_matrix @ weights


def encode_payload(header: StreamHeader, codes) -> bytes:
    header.validate()
    codes = np.asarray(codes)
    if codes.size == 0:
        codes = codes.reshape(header.frame_count, header.n_codebooks)
    if codes.shape != (header.frame_count, header.n_codebooks):
        raise EncodingError(
            f"codes shape {codes.shape} does not match header "
            f"({header.frame_count}, {header.n_codebooks})"
        )
    if codes.size:
        if not np.issubdtype(codes.dtype, np.integer):
            raise EncodingError(f"codes must be integers, got dtype {codes.dtype}")
        limit = 1 << header.bits_per_code
        if codes.min() < 0 or codes.max() >= limit:
            raise EncodingError(
                f"code values must lie in [0, {limit}) for {header.bits_per_code} bits, "
                f"got range [{codes.min()}, {codes.max()}]"
            )
    return header.pack() + pack_codes(codes, header.bits_per_code)


def decode_payload(data: bytes) -> tuple[StreamHeader, np.ndarray]:
    data = bytes(data)
    if len(data) < 4 or data[:4] != STREAM_MAGIC:
        raise FormatError("not a GRVQ stream (bad magic)")
    if len(data) < STREAM_HEADER_SIZE:
        raise TruncationError(STREAM_HEADER_SIZE, len(data), "stream header")
    _, version, sr, fs, g, s, bits, frames, length = _STREAM_HEADER.unpack_from(data)
    if version != STREAM_VERSION:
        raise VersionError(f"unsupported stream version {version}")
    header = StreamHeader(sr, fs, g, s, bits, frames, length, version).validate()
    expected = STREAM_HEADER_SIZE + header.payload_bytes
    if len(data) < expected:
        raise TruncationError(expected, len(data))
    if len(data) > expected:
        raise FormatError(f"{len(data) - expected} trailing bytes after payload")
    payload = data[STREAM_HEADER_SIZE:]
    spare = header.payload_bytes * 8 - header.payload_bits
    if spare and payload[-1] & ((1 << spare) - 1):
        raise FormatError("non-zero padding bits")
    codes = unpack_codes(payload, header.frame_count * header.n_codebooks, bits)
    return header, codes.reshape(header.frame_count, header.n_codebooks)


def serialize_model(model: GrvqModel) -> bytes:
    sizes = {model.codebook(g, s).size for g in range(model.n_groups) for s in range(model.n_stages)}
    if len(sizes) != 1:
        raise EncodingError("all codebooks must share one entry count to be serialized")
    if model.n_codebooks > MAX_CODEBOOKS:
        raise EncodingError(f"at most {MAX_CODEBOOKS} codebooks can be serialized")
    entries = sizes.pop()
    if entries > 1 << 16:
        raise EncodingError(f"at most 65536 entries per codebook, got {entries}")
    header = _MODEL_HEADER.pack(
        MODEL_MAGIC, MODEL_VERSION, model.sample_rate, model.frame_size,
        model.n_groups, model.n_stages, model.group_dim, entries,
    )
    tables = [model.codebook(g, s).entries for g in range(model.n_groups) for s in range(model.n_stages)]
    return header + np.stack(tables).astype("<f4").tobytes()


def deserialize_model(data: bytes) -> GrvqModel:
    data = bytes(data)
    if len(data) < 4 or data[:4] != MODEL_MAGIC:
        raise FormatError("not a GRVM model (bad magic)")
    if len(data) < MODEL_HEADER_SIZE:
        raise TruncationError(MODEL_HEADER_SIZE, len(data), "model header")
    _, version, sr, fs, g, s, dim, entries = _MODEL_HEADER.unpack_from(data)
    if version != MODEL_VERSION:
        raise VersionError(f"unsupported model version {version}")
    if sr == 0 or fs < 4 or fs % 2:
        raise FormatError(f"invalid front-end settings sample_rate={sr}, frame_size={fs}")
    if g < 1 or s < 1 or g * s > MAX_CODEBOOKS:
        raise FormatError(f"invalid codebook layout {g}x{s}")
    if dim < 1 or not 1 <= entries <= 1 << 16:
        raise FormatError(f"invalid codebook shape {entries}x{dim}")
    body = 4 * g * s * entries * dim
    if body > MAX_PAYLOAD_BYTES:
        raise FormatError(f"model body of {body} bytes exceeds the 1 GiB cap")
    expected = MODEL_HEADER_SIZE + body
    if len(data) < expected:
        raise TruncationError(expected, len(data), "model")
    if len(data) > expected:
        raise FormatError(f"{len(data) - expected} trailing bytes after model")
    tables = np.frombuffer(data, dtype="<f4", offset=MODEL_HEADER_SIZE).reshape(g, s, entries, dim)
    if not np.all(np.isfinite(tables)):
        raise FormatError("model contains non-finite codebook entries")
    stacks = tuple(
        RvqStack(tuple(Codebook(tables[gi, si].astype(np.float32)) for si in range(s)))
        for gi in range(g)
    )
    return GrvqModel(stacks, sample_rate=sr, frame_size=fs)


@dataclass(frozen=True)
class CodecConfig:
    sample_rate: int
    strides: tuple
    n_codebooks: int
    entries: int = 1024

    def __post_init__(self):
        object.__setattr__(self, "strides", tuple(int(s) for s in self.strides))
        if self.sample_rate <= 0:
            raise ConfigurationError(f"sample_rate must be positive, got {self.sample_rate}")
        if not self.strides or any(s < 1 for s in self.strides):
            raise ConfigurationError(f"strides must all be >= 1, got {self.strides}")
        if self.n_codebooks < 1:
            raise ConfigurationError(f"n_codebooks must be >= 1, got {self.n_codebooks}")
        bits_for_entries(self.entries)

    @property
    def downsample(self) -> int:
        return math.prod(self.strides)

    @classmethod
    def for_model(cls, model: GrvqModel) -> "CodecConfig":
        return cls(model.sample_rate, (model.frame_size // 2,), model.n_codebooks,
                   model.codebook(0, 0).size)


def frame_rate_of(config: CodecConfig) -> float:
    return config.sample_rate / config.downsample


def bitrate_of(config: CodecConfig) -> float:
    return frame_rate_of(config) * config.n_codebooks * bits_for_entries(config.entries)


# Encoder stride schedules and their downsample factors.
STRIDE_SCHEDULES: dict[int, Sequence[int]] = {
    320: (2, 4, 5, 8),
    240: (2, 4, 5, 6),
    32: (2, 2, 2, 4),
}
