import numpy as np
import pytest
from scipy.signal import get_window

from oracles import naive_power_spectrum
from ifdsed.config import FeatureConfig
from ifdsed.corpus import class_frequency
from ifdsed.features import extract_logmel, frame_signal, mel_filterbank

CFG = FeatureConfig()


def test_silence_is_log_floor():
    out = extract_logmel(np.zeros(16000), CFG).values
    np.testing.assert_array_equal(out, np.full_like(out, np.log(CFG.floor)))


def test_shape_contract():
    out = extract_logmel(np.random.default_rng(0).normal(size=5 * 16000), CFG)
    assert out.values.shape == (100, 64)
    assert out.frame_rate == 20.0
    assert np.isfinite(out.values).all()


def test_too_short():
    with pytest.raises(ValueError):
        extract_logmel(np.zeros(100), CFG)


def test_deterministic():
    x = np.random.default_rng(1).normal(size=16000)
    np.testing.assert_array_equal(extract_logmel(x, CFG).values, extract_logmel(x, CFG).values)


def test_tone_matches_naive_dft_and_peak_is_stable():
    sr = CFG.sample_rate
    t = np.arange(2 * sr) / sr
    tone = 0.5 * np.sin(2 * np.pi * class_frequency(0) * t)
    out = extract_logmel(tone, CFG).values
    # oracle: direct-summation DFT of the same windowed frames through the same filterbank
    win = int(CFG.window_s * sr)
    hop = int(CFG.hop_s * sr)
    frames = frame_signal(tone, out.shape[0], hop, win) * get_window("hann", win, fftbins=True)
    fb = mel_filterbank(sr, 512, CFG.n_mels)
    for k in (3, 17, 30):
        expected = np.log(fb @ naive_power_spectrum(frames[k], 512) + CFG.floor)
        np.testing.assert_allclose(out[k], expected, rtol=1e-9, atol=1e-9)
    interior = out[1:-1].argmax(axis=1)
    assert len(set(interior.tolist())) == 1
    centers = (np.argmax(fb, axis=1) * sr / 512)
    assert abs(centers[interior[0]] - class_frequency(0)) < 60


def test_filterbank_shape_and_nonnegative():
    fb = mel_filterbank(16000, 512, 64)
    assert fb.shape == (64, 257) and (fb >= 0).all()
    assert fb.sum(axis=0)[1:200].min() > 0
