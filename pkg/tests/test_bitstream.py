import hashlib
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from grvq.bitstream import (
    MODEL_HEADER_SIZE,
    STREAM_HEADER_SIZE,
    STRIDE_SCHEDULES,
    CodecConfig,
    StreamHeader,
    bitrate_of,
    bits_for_entries,
    decode_payload,
    deserialize_model,
    encode_payload,
    frame_rate_of,
    serialize_model,
)
from grvq.errors import (
    ConfigurationError,
    EncodingError,
    FormatError,
    GrvqError,
    TruncationError,
    VersionError,
)
from grvq.quantizer import GrvqModel, RvqStack, random_model
from grvq.vq import Codebook

DATA = Path(__file__).parent / "data"


def header(t, g=2, s=2, bits=10, length=None):
    if length is None:
        length = max(t - 1, 0) * 240
    return StreamHeader(24000, 480, g, s, bits, t, length)


# --- encode_payload ----------------------------------------------------------

def test_empty_stream_is_header_only():
    data = encode_payload(header(0), np.zeros((0, 4), dtype=np.int64))
    assert len(data) == STREAM_HEADER_SIZE == 32
    h, codes = decode_payload(data)
    assert h == header(0) and codes.shape == (0, 4)


def test_hand_packed_frame():
    data = encode_payload(header(1, length=0), np.array([[1023, 0, 1, 2]]))
    # 1111111111 0000000000 0000000001 0000000010
    assert data[STREAM_HEADER_SIZE:] == bytes([0xFF, 0xC0, 0x00, 0x04, 0x02])


def test_payload_length_and_padding():
    h = header(3, g=1, s=1, bits=3)
    data = encode_payload(h, np.array([[7], [0], [5]]))
    assert h.payload_bits == 9
    assert data[STREAM_HEADER_SIZE:] == bytes([0b11100010, 0b10000000])


def test_encode_rejects_out_of_range_codes():
    with pytest.raises(EncodingError):
        encode_payload(header(1), np.array([[1024, 0, 0, 0]]))
    with pytest.raises(EncodingError):
        encode_payload(header(1), np.array([[-1, 0, 0, 0]]))
    with pytest.raises(EncodingError):
        encode_payload(header(2), np.zeros((1, 4), dtype=np.int64))


@settings(max_examples=60, deadline=None)
@given(
    t=st.integers(0, 40),
    g=st.integers(1, 4),
    s=st.integers(1, 4),
    bits=st.integers(1, 16),
    seed=st.integers(0, 2**32 - 1),
)
def test_stream_round_trip(t, g, s, bits, seed):
    rng = np.random.default_rng(seed)
    h = header(t, g, s, bits, length=int(rng.integers(0, max(t - 1, 0) * 240 + 1)))
    codes = rng.integers(0, 1 << bits, (t, g * s))
    data = encode_payload(h, codes)
    assert len(data) == STREAM_HEADER_SIZE + -(-t * g * s * bits // 8)
    h2, c2 = decode_payload(data)
    assert h2 == h
    np.testing.assert_array_equal(c2, codes)


# --- decode_payload errors ---------------------------------------------------

def _valid_stream():
    return encode_payload(header(5), np.arange(20).reshape(5, 4))


def test_bad_magic():
    data = bytearray(_valid_stream())
    data[0] ^= 0xFF
    with pytest.raises(FormatError):
        decode_payload(bytes(data))


def test_truncated_payload_reports_lengths():
    data = _valid_stream()
    with pytest.raises(TruncationError) as info:
        decode_payload(data[:-3])
    assert info.value.expected == len(data)
    assert info.value.actual == len(data) - 3
    with pytest.raises(TruncationError):
        decode_payload(data[:20])


def test_unsupported_version():
    data = bytearray(_valid_stream())
    data[4] = 2
    with pytest.raises(VersionError):
        decode_payload(bytes(data))


def test_trailing_bytes_and_dirty_padding():
    with pytest.raises(FormatError):
        decode_payload(_valid_stream() + b"\x00")
    data = bytearray(encode_payload(header(3, g=1, s=1, bits=3), np.array([[7], [0], [5]])))
    data[-1] |= 1
    with pytest.raises(FormatError):
        decode_payload(bytes(data))


def test_header_caps():
    with pytest.raises(FormatError):
        header(2, g=8, s=9).validate()
    with pytest.raises(FormatError):
        StreamHeader(24000, 480, 1, 1, 10, 2, 241).validate()
    with pytest.raises(FormatError):
        StreamHeader(24000, 480, 64, 1, 16, 1 << 31, 0).validate()


@settings(max_examples=300, deadline=None)
@given(st.binary(max_size=80))
def test_decode_is_total_on_random_bytes(blob):
    for data in (blob, b"GRVQ" + blob, _valid_stream()[:12] + blob):
        try:
            decode_payload(data)
        except GrvqError:
            pass


@settings(max_examples=300, deadline=None)
@given(pos=st.integers(0, 51), value=st.integers(0, 255))
def test_decode_is_total_on_mutated_streams(pos, value):
    data = bytearray(_valid_stream())
    data[pos % len(data)] = value
    try:
        h, codes = decode_payload(bytes(data))
    except GrvqError:
        return
    assert codes.shape == (h.frame_count, h.n_codebooks)


# --- model files -------------------------------------------------------------

@settings(max_examples=30, deadline=None)
@given(
    g=st.integers(1, 3), s=st.integers(1, 3), e=st.integers(1, 20),
    d=st.integers(1, 6), seed=st.integers(0, 2**32 - 1),
)
def test_model_round_trip(g, s, e, d, seed):
    model = random_model(np.random.default_rng(seed), g, s, e, d, frame_size=4 * g * d)
    data = serialize_model(model)
    assert len(data) == MODEL_HEADER_SIZE + 4 * g * s * e * d
    back = deserialize_model(data)
    assert (back.n_groups, back.n_stages, back.sample_rate, back.frame_size) == (g, s, 24000, 4 * g * d)
    for gi in range(g):
        for si in range(s):
            assert back.codebook(gi, si).entries.tobytes() == model.codebook(gi, si).entries.tobytes()


def test_model_errors():
    data = serialize_model(random_model(np.random.default_rng(0), 2, 2, 4, 3))
    with pytest.raises(FormatError):
        deserialize_model(b"XRVM" + data[4:])
    with pytest.raises(TruncationError):
        deserialize_model(data[:-1])
    with pytest.raises(FormatError):
        deserialize_model(data + b"\0")
    bad = bytearray(data)
    bad[-4:] = np.array([np.nan], dtype="<f4").tobytes()
    with pytest.raises(FormatError):
        deserialize_model(bytes(bad))


@settings(max_examples=300, deadline=None)
@given(st.binary(max_size=60))
def test_deserialize_is_total(blob):
    for data in (blob, b"GRVM" + blob):
        try:
            deserialize_model(data)
        except GrvqError:
            pass


# --- golden files ------------------------------------------------------------

def _golden_model():
    t = ((np.arange(48).reshape(2, 2, 4, 3) - 20) / 8).astype(np.float32)
    return GrvqModel(tuple(RvqStack(tuple(Codebook(t[g, s]) for s in range(2))) for g in range(2)))


GOLDEN_CODES = np.array([[1023, 0, 1, 2], [5, 6, 7, 8], [512, 511, 3, 1000]])


def test_golden_stream():
    golden = (DATA / "golden.grvq").read_bytes()
    assert hashlib.sha256(golden).hexdigest() == "44a74d1e219f85cda5457ff06c65d7cee8f80f8867914091fd51593a490e9f30"
    h = StreamHeader(24000, 480, 2, 2, 10, 3, 480)
    assert encode_payload(h, GOLDEN_CODES) == golden
    h2, codes = decode_payload(golden)
    assert h2 == h
    np.testing.assert_array_equal(codes, GOLDEN_CODES)


def test_golden_model():
    golden = (DATA / "golden.grvm").read_bytes()
    assert hashlib.sha256(golden).hexdigest() == "1be6878722c57453efec0b7c996ae6aa375a4038a9092c2a90e8499ca7212b30"
    assert serialize_model(_golden_model()) == golden
    assert golden[:4] == b"GRVM" and len(golden) == 26 + 4 * 48


# --- rate arithmetic ---------------------------------------------------------

def test_bits_for_entries():
    assert [bits_for_entries(e) for e in (1, 2, 3, 4, 1024, 1025)] == [1, 1, 2, 2, 10, 11]
    with pytest.raises(ConfigurationError):
        bits_for_entries(0)


def test_frame_rates():
    assert frame_rate_of(CodecConfig(24000, (2, 4, 5, 6), 4)) == 100.0
    assert frame_rate_of(CodecConfig(24000, (2, 4, 5, 8), 4)) == 75.0
    assert frame_rate_of(CodecConfig(16000, (2, 2, 2, 4), 4)) == 500.0
    for down, strides in STRIDE_SCHEDULES.items():
        assert CodecConfig(24000, strides, 1).downsample == down


def test_bitrates():
    assert bitrate_of(CodecConfig(24000, (2, 4, 5, 6), 4, 1024)) == 4000.0
    assert bitrate_of(CodecConfig(24000, (2, 4, 5, 8), 8, 1024)) == 6000.0
    assert bitrate_of(CodecConfig(1, (1,), 1, 2)) == 1.0


def test_codec_config_errors():
    with pytest.raises(ConfigurationError):
        CodecConfig(24000, (2, 0), 4)
    with pytest.raises(ConfigurationError):
        CodecConfig(24000, (), 4)


def test_config_for_model():
    model = random_model(np.random.default_rng(0), 2, 2, 1024, 1, frame_size=480)
    cfg = CodecConfig.for_model(model)
    assert cfg.downsample == 240 and bitrate_of(cfg) == 4000.0
