"""Log-mel front end."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.signal import get_window

from .config import FeatureConfig
from .corpus import num_frames


@dataclass
class FeatureMatrix:
    values: np.ndarray  # T x n_mels
    frame_rate: float
    clip_id: str = ""


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@lru_cache(maxsize=8)
def mel_filterbank(sample_rate: int, n_fft: int, n_mels: int, fmin: float = 0.0, fmax: float | None = None) -> np.ndarray:
    """Triangular HTK-mel filterbank, shape (n_mels, n_fft // 2 + 1)."""
    fmax = sample_rate / 2.0 if fmax is None else fmax
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    bins = np.fft.rfftfreq(n_fft, 1.0 / sample_rate)
    lower, center, upper = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (bins[None, :] - lower) / (center - lower)
    falling = (upper - bins[None, :]) / (upper - center)
    fb = np.maximum(0.0, np.minimum(rising, falling))
    fb.setflags(write=False)
    return fb


def frame_signal(waveform: np.ndarray, n_frames: int, hop: int, win: int) -> np.ndarray:
    """Windows of ``win`` samples centred on (t + 0.5) * hop, zero padded at the edges."""
    padded = np.pad(waveform, (win, win + hop))
    starts = ((np.arange(n_frames) + 0.5) * hop).astype(np.int64) - win // 2 + win
    idx = starts[:, None] + np.arange(win)[None, :]
    return padded[idx]


def extract_logmel(waveform: np.ndarray, config: FeatureConfig, clip_id: str = "") -> FeatureMatrix:
    """log(mel energy + floor), one row per hop.

    Frame t is centred at (t + 0.5) * hop_s seconds, matching the frame-centre
    labelling rule, and the number of frames is ceil(duration * frame_rate).
    """
    waveform = np.asarray(waveform, dtype=np.float64)
    sr = config.sample_rate
    win = int(round(config.window_s * sr))
    hop = int(round(config.hop_s * sr))
    if waveform.ndim != 1 or len(waveform) < win:
        raise ValueError(f"waveform of {waveform.shape} samples is shorter than one {win}-sample window")
    n_fft = 1 << (win - 1).bit_length()
    n_frames = num_frames(len(waveform) / sr, config.frame_rate)
    frames = frame_signal(waveform, n_frames, hop, win) * get_window("hann", win, fftbins=True)
    power = np.abs(np.fft.rfft(frames, n=n_fft, axis=1)) ** 2
    mel = power @ mel_filterbank(sr, n_fft, config.n_mels).T
    return FeatureMatrix(np.log(mel + config.floor), config.frame_rate, clip_id)
