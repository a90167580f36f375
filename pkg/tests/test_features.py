import numpy as np
import pytest

from mixitkit.audio import Waveform
from mixitkit.errors import InvalidInputError
from mixitkit.features import (LOG_FLOOR, band_center_hz, log_mel, mel_filterbank,
                               segment_spectrogram)


def frame_count_oracle(num_samples, sr, window_ms, hop_ms):
    win = int(round(window_ms * sr / 1000.0))
    hop = int(round(hop_ms * sr / 1000.0))
    return 1 + (num_samples - win) // hop


def test_frame_count_096s_16k():
    # 0.96 s at 16 kHz, 25 ms window, 10 ms hop: 1 + (15360-400)//160 = 94
    sr = 16000
    samples = int(0.96 * sr)
    expected = frame_count_oracle(samples, sr, 25, 10)
    assert expected == 94
    spec = log_mel(Waveform(np.zeros(samples), sr), 25, 10, 64)
    assert spec.num_frames == expected
    # the 96-window segmentation pads the remainder with floor frames
    batch = segment_spectrogram(spec, 96, 10)
    assert batch.num_segments == 1
    assert batch.segments.shape == (1, 96, 64)
    assert np.all(batch.segments[0, 94:] == LOG_FLOOR)


def test_sine_hits_its_mel_band():
    # filterbank oracle: a tone at a band's center frequency must maximize
    # that band's mean log energy
    sr = 16000
    bands = 16
    t = np.arange(sr) / sr
    for b in (2, 7, 12):
        f = band_center_hz(b, bands, sr)
        wav = Waveform(0.5 * np.sin(2 * np.pi * f * t), sr)
        spec = log_mel(wav, 25, 10, bands)
        assert int(spec.frames.mean(axis=0).argmax()) == b


def test_all_zero_input_floors():
    spec = log_mel(Waveform(np.zeros(8000), 8000), 25, 10, 8)
    assert np.all(spec.frames == LOG_FLOOR)


def test_too_short_clip_raises():
    with pytest.raises(InvalidInputError):
        log_mel(Waveform(np.zeros(100), 8000), 25, 10, 8)


def test_filterbank_rows_are_triangles():
    bank = mel_filterbank(8, 400, 16000)
    assert bank.shape == (8, 201)
    assert np.all(bank >= 0)
    # every filter has positive mass and a single peak of 1 at its center bin
    for row in bank:
        assert row.sum() > 0


def test_shift_covariance_at_hop_granularity():
    rng = np.random.default_rng(0)
    sr = 8000
    hop = int(round(10 * sr / 1000.0))
    x = rng.standard_normal(sr)
    a = log_mel(Waveform(x, sr), 25, 10, 16)
    b = log_mel(Waveform(x[hop:], sr), 25, 10, 16)
    inner = min(a.num_frames - 1, b.num_frames)
    np.testing.assert_allclose(a.frames[1:1 + inner], b.frames[:inner], atol=1e-6)


def test_segmentation_exact_fit():
    spec = log_mel(Waveform(np.zeros(8000), 8000), 25, 10, 4)
    spec.frames = np.arange(96 * 4, dtype=np.float64).reshape(96, 4)
    batch = segment_spectrogram(spec, 96, 10)
    assert batch.num_segments == 1


def test_segmentation_formula_106():
    spec = log_mel(Waveform(np.zeros(8000), 8000), 25, 10, 4)
    spec.frames = np.zeros((106, 4))
    batch = segment_spectrogram(spec, 96, 10)
    assert batch.num_segments == 2


def test_segmentation_pads_remainder_with_floor():
    spec = log_mel(Waveform(np.zeros(8000), 8000), 25, 10, 4)
    spec.frames = np.ones((100, 4))
    batch = segment_spectrogram(spec, 96, 10)
    assert batch.num_segments == 2
    # second segment's last 6 frames are padding
    np.testing.assert_array_equal(batch.segments[1, -6:], np.full((6, 4), LOG_FLOOR))
    np.testing.assert_array_equal(batch.segments[1, :-6], np.ones((90, 4)))


def test_segmentation_short_input_pads_up():
    spec = log_mel(Waveform(np.zeros(8000), 8000), 25, 10, 4)
    spec.frames = np.ones((10, 4))
    batch = segment_spectrogram(spec, 32, 16)
    assert batch.num_segments == 1
    assert batch.segments.shape == (1, 32, 4)
