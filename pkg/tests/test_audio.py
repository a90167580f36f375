import numpy as np
import pytest

from mixitkit.audio import (SourceStack, Waveform, mixture_consistency, power_db,
                            read_wav, write_wav)
from mixitkit.errors import FormatError, InvalidInputError, UnsupportedError


def test_wav_roundtrip_zeros(tmp_path):
    path = tmp_path / "zeros.wav"
    write_wav(path, Waveform(np.zeros(16000), 16000))
    back = read_wav(path)
    assert back.sample_rate == 16000
    np.testing.assert_array_equal(back.samples, np.zeros(16000))


def test_wav_roundtrip_full_scale_sine(tmp_path):
    sr = 16000
    t = np.arange(sr) / sr
    wav = Waveform(np.sin(2 * np.pi * 440.0 * t), sr)
    path = tmp_path / "sine.wav"
    write_wav(path, wav)
    back = read_wav(path)
    assert np.max(np.abs(back.samples - wav.samples)) <= 2.0 ** -15


def test_wav_rejects_stereo(tmp_path):
    import struct
    payload = struct.pack("<4sI4s4sIHHIIHH4sI", b"RIFF", 36 + 8, b"WAVE", b"fmt ",
                          16, 1, 2, 8000, 32000, 4, 16, b"data", 8) + b"\x00" * 8
    path = tmp_path / "stereo.wav"
    path.write_bytes(payload)
    with pytest.raises(UnsupportedError):
        read_wav(path)


def test_wav_rejects_malformed_header(tmp_path):
    path = tmp_path / "bad.wav"
    path.write_bytes(b"RIFX____WAVE")
    with pytest.raises(FormatError):
        read_wav(path)


def test_wav_float32_read(tmp_path):
    import struct
    samples = np.linspace(-0.9, 0.9, 100).astype("<f4")
    body = samples.tobytes()
    header = (b"RIFF" + struct.pack("<I", 36 + len(body)) + b"WAVE"
              + b"fmt " + struct.pack("<IHHIIHH", 16, 3, 1, 8000, 32000, 4, 32)
              + b"data" + struct.pack("<I", len(body)))
    path = tmp_path / "f32.wav"
    path.write_bytes(header + body)
    back = read_wav(path)
    np.testing.assert_allclose(back.samples, samples.astype(np.float64), atol=1e-7)


def test_mixture_consistency_already_consistent():
    rng = np.random.default_rng(0)
    rows = rng.standard_normal((3, 50))
    x = Waveform(rows.sum(axis=0), 8000)
    out = mixture_consistency(SourceStack(rows, 8000), x)
    np.testing.assert_allclose(out.sources, rows, atol=1e-12)


def test_mixture_consistency_zero_stack_splits_uniformly():
    rng = np.random.default_rng(1)
    x = Waveform(rng.standard_normal(64), 8000)
    out = mixture_consistency(SourceStack(np.zeros((2, 64)), 8000), x)
    np.testing.assert_allclose(out.sources[0], x.samples / 2)
    np.testing.assert_allclose(out.sources[1], x.samples / 2)


def test_mixture_consistency_residual_and_idempotence():
    rng = np.random.default_rng(2)
    stack = SourceStack(rng.standard_normal((4, 128)), 8000)
    x = Waveform(rng.standard_normal(128), 8000)
    once = mixture_consistency(stack, x)
    assert np.max(np.abs(once.sources.sum(axis=0) - x.samples)) <= 1e-6
    twice = mixture_consistency(once, x)
    np.testing.assert_allclose(twice.sources, once.sources, atol=1e-12)


def test_mixture_consistency_length_mismatch():
    with pytest.raises(InvalidInputError):
        mixture_consistency(SourceStack(np.zeros((2, 10)), 8000),
                            Waveform(np.zeros(11), 8000))


def test_power_db_unit_rms():
    assert abs(power_db(Waveform(np.ones(1000), 8000))) < 1e-9


def test_power_db_silence_floor():
    assert power_db(Waveform(np.zeros(100), 8000)) == pytest.approx(-120.0)


def test_power_db_scaling():
    rng = np.random.default_rng(3)
    x = rng.standard_normal(2048)
    base = power_db(Waveform(x, 8000))
    for a in (0.5, 2.0, 10.0):
        got = power_db(Waveform(a * x, 8000))
        assert got - base == pytest.approx(20.0 * np.log10(a), abs=1e-6)


def test_waveform_rejects_nonfinite():
    with pytest.raises(InvalidInputError):
        Waveform(np.array([0.0, np.nan]), 8000)
    with pytest.raises(InvalidInputError):
        Waveform(np.zeros(4), 0)
