"""Log-mel spectrogram front-end and fixed-size segmentation.

Conventions (documented because several are underdetermined by common usage):
  * periodic Hann window: w[n] = 0.5 - 0.5*cos(2*pi*n/W)
  * magnitude-squared one-sided FFT
  * HTK mel scale: mel(f) = 2595 * log10(1 + f / 700), triangular filters with
    B+2 break points spaced uniformly in mel between 0 Hz and Nyquist
  * natural log with floor: log(max(energy, 1e-8))
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .audio import Waveform
from .errors import InvalidInputError

LOG_FLOOR_EPS = 1e-8
LOG_FLOOR = float(np.log(LOG_FLOOR_EPS))


@dataclass
class LogMelSpectrogram:
    """frames is F x B: F analysis windows by B mel bands, natural-log energy."""

    frames: np.ndarray
    window_ms: float
    hop_ms: float
    mel_bands: int

    @property
    def num_frames(self):
        return self.frames.shape[0]


@dataclass
class SegmentBatch:
    """segments is S x W x B: S windows of W spectrogram frames each."""

    segments: np.ndarray
    segment_windows: int
    segment_hop_windows: int

    @property
    def num_segments(self):
        return self.segments.shape[0]


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (np.power(10.0, np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(num_bands, fft_size, sample_rate):
    """Triangular HTK-style filters as a (num_bands, fft_size//2 + 1) matrix."""
    if num_bands < 1:
        raise InvalidInputError(f"mel_bands must be >= 1, got {num_bands}")
    num_bins = fft_size // 2 + 1
    mel_points = np.linspace(0.0, hz_to_mel(sample_rate / 2.0), num_bands + 2)
    hz_points = mel_to_hz(mel_points)
    bin_freqs = np.arange(num_bins) * sample_rate / fft_size
    bank = np.zeros((num_bands, num_bins))
    for b in range(num_bands):
        lo, center, hi = hz_points[b], hz_points[b + 1], hz_points[b + 2]
        rising = (bin_freqs - lo) / (center - lo)
        falling = (hi - bin_freqs) / (hi - center)
        bank[b] = np.maximum(0.0, np.minimum(rising, falling))
    return bank


def band_center_hz(band, num_bands, sample_rate):
    """Center frequency of a mel band (peak of its triangular filter)."""
    mel_points = np.linspace(0.0, hz_to_mel(sample_rate / 2.0), num_bands + 2)
    return float(mel_to_hz(mel_points[band + 1]))


def frame_signal(samples, window, hop):
    n = 1 + (len(samples) - window) // hop
    idx = np.arange(window)[None, :] + hop * np.arange(n)[:, None]
    return samples[idx]


def hann_window(length):
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(length) / length)


@lru_cache(maxsize=16)
def _analysis_constants(mel_bands, win, sample_rate):
    return hann_window(win), mel_filterbank(mel_bands, win, sample_rate).T


def log_mel(x: Waveform, window_ms=25.0, hop_ms=10.0, mel_bands=64) -> LogMelSpectrogram:
    """Log-mel analysis of a waveform.

    Frame count is F = 1 + floor((T - win) / hop) with win/hop converted from
    milliseconds by rounding. Raises InvalidInputError if the clip is shorter
    than one window.
    """
    win = int(round(window_ms * x.sample_rate / 1000.0))
    hop = int(round(hop_ms * x.sample_rate / 1000.0))
    if win < 1 or hop < 1:
        raise InvalidInputError(f"window/hop too small: {win}/{hop} samples")
    if len(x) < win:
        raise InvalidInputError(f"clip of {len(x)} samples is shorter than one {win}-sample window")
    if mel_bands < 1:
        raise InvalidInputError(f"mel_bands must be >= 1, got {mel_bands}")
    window, bank_t = _analysis_constants(mel_bands, win, x.sample_rate)
    frames = frame_signal(x.samples, win, hop) * window[None, :]
    power = np.square(np.abs(np.fft.rfft(frames, axis=1)))
    energy = power @ bank_t
    return LogMelSpectrogram(
        frames=np.log(np.maximum(energy, LOG_FLOOR_EPS)),
        window_ms=window_ms,
        hop_ms=hop_ms,
        mel_bands=mel_bands,
    )


def segment_spectrogram(spec: LogMelSpectrogram, win_windows, hop_windows) -> SegmentBatch:
    """Slice a spectrogram into overlapping fixed-size segments.

    Frames are right-padded with the log floor until an integral number of
    segments fits, so S = 1 + (F_padded - win) / hop always holds and short
    inputs yield one padded segment.
    """
    if win_windows < 1 or hop_windows < 1:
        raise InvalidInputError(f"segment win/hop must be >= 1, got {win_windows}/{hop_windows}")
    frames = spec.frames
    f = frames.shape[0]
    if f < win_windows:
        padded_len = win_windows
    else:
        overhang = (f - win_windows) % hop_windows
        padded_len = f if overhang == 0 else f + (hop_windows - overhang)
    if padded_len > f:
        pad = np.full((padded_len - f, frames.shape[1]), LOG_FLOOR)
        frames = np.concatenate([frames, pad], axis=0)
    n = 1 + (padded_len - win_windows) // hop_windows
    idx = np.arange(win_windows)[None, :] + hop_windows * np.arange(n)[:, None]
    return SegmentBatch(
        segments=frames[idx],
        segment_windows=win_windows,
        segment_hop_windows=hop_windows,
    )
