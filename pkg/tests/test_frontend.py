import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.signal import get_window

from grvq.errors import (
    ConfigurationError,
    DegenerateInputError,
    EmptyInputError,
    ShapeError,
)
from grvq.frontend import (
    SNR_CAP_DB,
    AudioSignal,
    frame_count,
    mdct_analyze,
    mdct_synthesize,
    mel_distance,
    mel_spectrogram,
    snr_db,
)

SR = 24000


def sig(x, sr=SR):
    return AudioSignal(np.asarray(x, dtype=np.float64), sr)


def rel_err(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


def mdct_oracle(x, frame_size):
    """Per-frame textbook MDCT, summed term by term."""
    hop = frame_size // 2
    n_frames = -(-len(x) // hop) + 1
    padded = np.zeros((n_frames + 1) * hop)
    padded[hop:hop + len(x)] = x
    n = np.arange(frame_size)
    window = np.sin(np.pi * (n + 0.5) / frame_size)
    out = np.zeros((n_frames, hop))
    for t in range(n_frames):
        block = padded[t * hop:t * hop + frame_size] * window
        for k in range(hop):
            out[t, k] = np.sqrt(2.0 / hop) * np.sum(
                block * np.cos(np.pi / hop * (n + 0.5 + hop / 2) * (k + 0.5))
            )
    return out


# --- MDCT --------------------------------------------------------------------

def test_zero_signal_gives_zero_features():
    feats = mdct_analyze(sig(np.zeros(2000)), 480)
    assert feats.shape == (frame_count(2000, 480), 240)
    assert not feats.any()


def test_frame_count_and_output_length():
    x = np.random.default_rng(0).standard_normal(1000)
    feats = mdct_analyze(sig(x), 480)
    assert feats.shape == (int(np.ceil(1000 / 240)) + 1, 240)
    assert feats.dtype == np.float32
    out = mdct_synthesize(feats, 480, SR)
    assert len(out) == (feats.shape[0] - 1) * 240


def test_matches_direct_formula():
    x = np.random.default_rng(1).standard_normal(100)
    np.testing.assert_allclose(mdct_analyze(sig(x), 16), mdct_oracle(x, 16), atol=2e-6)


def test_round_trip_random_signal(rng):
    x = rng.uniform(-1, 1, SR)
    y = mdct_synthesize(mdct_analyze(sig(x), 480), 480, SR).samples[: len(x)]
    assert rel_err(y, x) < 1e-6


@settings(max_examples=40, deadline=None)
@given(
    frame_size=st.sampled_from([4, 8, 16, 64, 480]),
    extra=st.integers(0, 500),
    seed=st.integers(0, 2**32 - 1),
)
def test_round_trip_property(frame_size, extra, seed):
    x = np.random.default_rng(seed).standard_normal(4 * frame_size + extra)
    y = mdct_synthesize(mdct_analyze(sig(x), frame_size), frame_size, SR).samples
    assert len(y) >= len(x)
    assert rel_err(y[: len(x)], x) < 1e-6


def _sinusoid_energy(phase):
    hop = 240
    k0 = 20
    f = (k0 + 0.5) * SR / (2 * hop)
    x = np.sin(2 * np.pi * f * np.arange(SR) / SR + phase)
    return (mdct_analyze(sig(x), 480).astype(np.float64) ** 2).sum(axis=0), k0


@pytest.mark.parametrize("phase", [0.0, 0.7, 2.0])
def test_bin_centered_sinusoid_energy_distribution(phase):
    # Measured with the direct-formula oracle on a shorter excerpt as well.
    energy, k0 = _sinusoid_energy(phase)
    frac = energy / energy.sum()
    assert int(np.argmax(energy)) == k0
    assert 0.80 <= frac[k0] <= 0.82
    assert frac[k0 - 1:k0 + 2].sum() >= 0.985
    x = np.sin(2 * np.pi * (k0 + 0.5) * SR / 480 * np.arange(2400) / SR + phase)
    oracle = (mdct_oracle(x, 480) ** 2).sum(axis=0)
    assert int(np.argmax(oracle)) == k0


@pytest.mark.xfail(strict=True, reason="sine-window MDCT leaks ~19% of a stationary bin-centred tone into neighbouring bins")
def test_bin_centered_sinusoid_ninety_percent_in_one_column():
    energy, k0 = _sinusoid_energy(0.3)
    assert energy[k0] / energy.sum() >= 0.90


def test_single_coefficient_energy_conserved():
    feats = np.zeros((6, 240), dtype=np.float32)
    feats[3, 17] = 1.7
    out = mdct_synthesize(feats, 480, SR).samples
    assert abs(np.sum(out ** 2) - 1.7 ** 2) < 1e-6
    burst = np.flatnonzero(np.abs(out) > 0)
    assert burst.min() >= 2 * 240 and burst.max() < 4 * 240


def test_synthesize_zero_matrix():
    out = mdct_synthesize(np.zeros((5, 240), dtype=np.float32), 480, SR)
    assert len(out) == 4 * 240 and not out.samples.any()


@pytest.mark.parametrize("frame_size", [2, 7, 481, 0])
def test_bad_frame_size(frame_size):
    with pytest.raises(ConfigurationError):
        mdct_analyze(sig(np.ones(100)), frame_size)


def test_empty_signal_rejected():
    with pytest.raises(EmptyInputError):
        mdct_analyze(sig(np.zeros(0)), 480)


def test_synthesize_dimension_mismatch():
    with pytest.raises(ShapeError):
        mdct_synthesize(np.zeros((4, 100), dtype=np.float32), 480, SR)


# --- mel spectrogram ---------------------------------------------------------

def test_mel_zero_signal():
    mel = mel_spectrogram(sig(np.zeros(4000)), 512, 128, 64)
    assert mel.values.shape[1] == 64
    assert not mel.values.any()


def test_mel_white_noise_energy_stable():
    a = mel_spectrogram(sig(np.random.default_rng(1).standard_normal(SR)), 1024, 256).values
    b = mel_spectrogram(sig(np.random.default_rng(2).standard_normal(SR)), 1024, 256).values
    assert not np.allclose(a, b)
    assert abs(a.sum() / b.sum() - 1.0) < 0.2


def test_mel_scales_linearly_with_amplitude(rng):
    x = rng.standard_normal(5000)
    a = mel_spectrogram(sig(x), 256).values
    b = mel_spectrogram(sig(2 * x), 256).values
    np.testing.assert_allclose(b, 2 * a, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("window", [100, 0, 3])
def test_mel_window_must_be_power_of_two(window):
    with pytest.raises(ConfigurationError):
        mel_spectrogram(sig(np.ones(1000)), window)


def test_mel_bad_hop():
    with pytest.raises(ConfigurationError):
        mel_spectrogram(sig(np.ones(1000)), 256, 300)


@settings(max_examples=30, deadline=None)
@given(
    st.lists(st.floats(-1, 1, allow_nan=False), min_size=0, max_size=600),
    st.sampled_from([128, 256, 512]),
)
def test_mel_finite_non_negative(samples, window):
    mel = mel_spectrogram(sig(samples), window).values
    assert np.all(np.isfinite(mel)) and np.all(mel >= 0)


# --- metrics -----------------------------------------------------------------

def _unit_sine(n=SR):
    return np.sin(2 * np.pi * 440 * np.arange(n) / SR)


def test_snr_identical_hits_cap():
    x = sig(_unit_sine())
    assert snr_db(x, x) == SNR_CAP_DB


def test_snr_twenty_db(rng):
    ref = _unit_sine()
    noise = rng.standard_normal(ref.size)
    noise *= np.sqrt(0.01 * np.sum(ref ** 2) / np.sum(noise ** 2))
    assert abs(snr_db(sig(ref), sig(ref + noise)) - 20.0) < 0.5


def test_snr_of_silence_estimate_is_zero_db():
    assert snr_db(sig(_unit_sine()), sig(np.zeros(SR))) == pytest.approx(0.0, abs=1e-12)


def test_snr_decreases_with_noise_power(rng):
    ref = _unit_sine()
    noise = rng.standard_normal(ref.size)
    values = [snr_db(sig(ref), sig(ref + s * noise)) for s in (0.01, 0.1, 1.0)]
    assert values[0] > values[1] > values[2]


def test_snr_errors():
    with pytest.raises(ShapeError):
        snr_db(sig(np.ones(10)), sig(np.ones(11)))
    with pytest.raises(DegenerateInputError):
        snr_db(sig(np.zeros(10)), sig(np.ones(10)))


def _mel_oracle(x, sr, window_len, n_mels=64):
    """Frame-by-frame STFT magnitude and a loop-built HTK triangular filterbank."""
    hop = window_len // 4
    win = get_window("hann", window_len)
    padded = np.concatenate([np.zeros(window_len // 2), x, np.zeros(window_len // 2)])
    n_bins = window_len // 2 + 1
    mel_max = 2595.0 * np.log10(1 + (sr / 2) / 700.0)
    pts = [700.0 * (10 ** (mel_max * i / (n_mels + 1) / 2595.0) - 1) for i in range(n_mels + 2)]
    fb = np.zeros((n_bins, n_mels))
    for m in range(n_mels):
        lo, c, hi = pts[m], pts[m + 1], pts[m + 2]
        for b in range(n_bins):
            f = b * sr / window_len
            if lo <= f <= c:
                fb[b, m] = (f - lo) / (c - lo)
            elif c < f <= hi:
                fb[b, m] = (hi - f) / (hi - c)
    rows = []
    start = 0
    while start + window_len <= len(padded):
        spec = np.abs(np.fft.rfft(padded[start:start + window_len] * win))
        rows.append(spec @ fb)
        start += hop
    return np.array(rows)


def test_mel_distance_identity_and_symmetry(rng):
    a = sig(rng.standard_normal(6000) * 0.1)
    b = sig(rng.standard_normal(6000) * 0.1)
    assert mel_distance(a, a) == 0.0
    assert mel_distance(a, b) == mel_distance(b, a)
    assert mel_distance(a, b) > 0


def test_mel_distance_matches_direct_evaluation(rng):
    x = rng.standard_normal(5000) * 0.3
    scales = (128, 512)
    got = mel_distance(sig(x), sig(0.5 * x), scales)
    expected = 0.0
    for w in scales:
        d = _mel_oracle(x, SR, w) - _mel_oracle(0.5 * x, SR, w)
        expected += np.mean(np.abs(d)) + np.mean(d ** 2)
    expected /= len(scales)
    assert got > 0
    assert got == pytest.approx(expected, rel=1e-9)


def test_mel_distance_needs_scales():
    with pytest.raises(ConfigurationError):
        mel_distance(sig(np.ones(100)), sig(np.ones(100)), [])
