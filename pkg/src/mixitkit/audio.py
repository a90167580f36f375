"""Mono waveforms: WAV I/O, signal power, and the mixture-consistency projection.

WAV support is deliberately narrow: RIFF/WAVE, mono, 16-bit PCM or 32-bit
IEEE float for reading; writing always emits 16-bit PCM little-endian.
Multichannel files are rejected rather than silently downmixed.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, InvalidInputError, UnsupportedError

POWER_FLOOR = 1e-12  # added to mean square power before taking log10


@dataclass
class Waveform:
    """A mono signal. samples are float64 amplitudes, nominally in [-1, 1]."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise InvalidInputError(f"waveform must be 1-D, got shape {self.samples.shape}")
        if self.sample_rate <= 0:
            raise InvalidInputError(f"sample_rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(self.samples)):
            raise InvalidInputError("waveform contains non-finite samples")

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration(self):
        return len(self) / self.sample_rate


@dataclass
class SourceStack:
    """M source waveforms sharing one time axis, rows are sources."""

    sources: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.sources = np.asarray(self.sources, dtype=np.float64)
        if self.sources.ndim != 2 or self.sources.shape[0] < 1:
            raise InvalidInputError(f"source stack must be M x T with M >= 1, got {self.sources.shape}")
        if self.sample_rate <= 0:
            raise InvalidInputError(f"sample_rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(self.sources)):
            raise InvalidInputError("source stack contains non-finite entries")

    @property
    def num_sources(self):
        return self.sources.shape[0]

    @property
    def num_samples(self):
        return self.sources.shape[1]

    def row(self, m) -> Waveform:
        return Waveform(self.sources[m], self.sample_rate)

    def mixture(self) -> Waveform:
        return Waveform(self.sources.sum(axis=0), self.sample_rate)


def read_wav(path) -> Waveform:
    """Read a mono RIFF/WAVE file (16-bit PCM or 32-bit float).

    PCM samples are scaled by 1/32768 so full scale maps to [-1, 1).
    """
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise FormatError(f"{path}: not a RIFF/WAVE file")
    fmt = None
    payload = None
    pos = 12
    while pos + 8 <= len(data):
        cid = data[pos:pos + 4]
        (size,) = struct.unpack_from("<I", data, pos + 4)
        body = data[pos + 8:pos + 8 + size]
        if cid == b"fmt ":
            if size < 16:
                raise FormatError(f"{path}: fmt chunk too short ({size} bytes)")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif cid == b"data":
            payload = body
        pos += 8 + size + (size & 1)  # chunks are word-aligned
    if fmt is None or payload is None:
        raise FormatError(f"{path}: missing fmt or data chunk")
    audio_format, channels, sample_rate, _, _, bits = fmt
    if channels != 1:
        raise UnsupportedError(f"{path}: {channels} channels; only mono is supported")
    if audio_format == 1 and bits == 16:
        raw = np.frombuffer(payload, dtype="<i2")
        samples = raw.astype(np.float64) / 32768.0
    elif audio_format == 3 and bits == 32:
        samples = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    else:
        raise UnsupportedError(
            f"{path}: format tag {audio_format} / {bits} bits; need 16-bit PCM or 32-bit float"
        )
    return Waveform(samples, sample_rate)


def write_wav(path, wav: Waveform):
    """Write 16-bit PCM little-endian mono. Values are clipped to full scale."""
    pcm = np.clip(np.round(wav.samples * 32768.0), -32768, 32767).astype("<i2")
    payload = pcm.tobytes()
    byte_rate = wav.sample_rate * 2
    with open(path, "wb") as f:
        f.write(b"RIFF")
        f.write(struct.pack("<I", 36 + len(payload)))
        f.write(b"WAVE")
        f.write(b"fmt ")
        f.write(struct.pack("<IHHIIHH", 16, 1, 1, wav.sample_rate, byte_rate, 2, 16))
        f.write(b"data")
        f.write(struct.pack("<I", len(payload)))
        f.write(payload)
        if len(payload) & 1:
            f.write(b"\x00")


def mixture_consistency(stack: SourceStack, mixture: Waveform) -> SourceStack:
    """Project sources so they sum exactly to the mixture.

    The residual (mixture minus current sum) is split uniformly across the M
    sources. Idempotent: applying it twice equals applying it once.
    """
    if stack.num_samples != len(mixture):
        raise InvalidInputError(
            f"stack has {stack.num_samples} samples, mixture has {len(mixture)}"
        )
    residual = mixture.samples - stack.sources.sum(axis=0)
    projected = stack.sources + residual[None, :] / stack.num_sources
    return SourceStack(projected, stack.sample_rate)


def power_db(wav) -> float:
    """Mean-square signal power in dB: 10*log10(mean(x^2) + 1e-12).

    The floor keeps silence finite at -120 dB. Accepts a Waveform or a bare
    sample array.
    """
    samples = wav.samples if isinstance(wav, Waveform) else np.asarray(wav, dtype=np.float64)
    return float(10.0 * np.log10(np.mean(np.square(samples)) + POWER_FLOOR))
