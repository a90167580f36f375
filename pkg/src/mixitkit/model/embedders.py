"""Toy audio and video embedding networks.

Both are small strided-conv stacks: the audio network maps each log-mel
segment to one embedding row, the video network maps each frame to an
embedding row plus one local embedding per spatial grid cell (taken before
spatial downsampling, so the g x g geometry is preserved).
"""

from functools import lru_cache

import numpy as np

from .. import autodiff as ad
from ..errors import InvalidInputError
from ..features import (LOG_FLOOR, LOG_FLOOR_EPS, SegmentBatch, hann_window,
                        mel_filterbank)
from . import layers
from .config import EmbedderConfig, VideoFeatures


def _segment_tensors(segments):
    """Normalize input to a list of (W, B) tensors or arrays."""
    if isinstance(segments, SegmentBatch):
        return [segments.segments[i] for i in range(segments.num_segments)]
    if isinstance(segments, (list, tuple)):
        return list(segments)
    arr = ad.value_of(segments)
    if arr.ndim != 3:
        raise InvalidInputError(f"segments must be S x W x B, got shape {arr.shape}")
    return [arr[i] for i in range(arr.shape[0])]


def _audio_embed_one(leaves, cfg: EmbedderConfig, seg):
    seg = ad.as_tensor(seg)
    w, b = seg.value.shape
    x = ad.reshape(seg, (w, b, 1))
    x = layers.relu(layers.conv2d(leaves, "aemb.conv1", x, stride=2, pad=1))
    x = layers.relu(layers.conv2d(leaves, "aemb.conv2", x, stride=2, pad=1))
    return layers.dense(leaves, "aemb.out", layers.spatial_mean(x))


def audio_embedder_forward(params, cfg: EmbedderConfig, segments, tape=None):
    """One embedding row per spectrogram segment: (S, N) matrix."""
    leaves = tape.leaves if tape is not None else params.make_leaves()
    rows = [_audio_embed_one(leaves, cfg, seg) for seg in _segment_tensors(segments)]
    out = ad.concat(rows, axis=0)
    if tape is not None:
        return out
    return out.value


def _video_embed_frame(leaves, cfg: EmbedderConfig, frame):
    local_map = layers.relu(layers.conv2d(leaves, "vemb.conv1", frame, stride=1, pad=1))
    g = local_map.value.shape[0]
    cells = ad.reshape(local_map, (g * g, local_map.value.shape[2]))
    local_rows = layers.dense(leaves, "vemb.local", cells)
    x = layers.relu(layers.conv2d(leaves, "vemb.conv2", local_map, stride=2, pad=1))
    frame_row = layers.dense(leaves, "vemb.out", layers.spatial_mean(x))
    return frame_row, local_rows


def video_embedder_forward(params, cfg: EmbedderConfig, video: VideoFeatures, tape=None):
    """Per-frame embeddings (F_v, N) and the local grid (F_v * g^2, local_dim)."""
    leaves = tape.leaves if tape is not None else params.make_leaves()
    frame_rows, local_blocks = [], []
    for j in range(video.num_frames):
        row, local = _video_embed_frame(leaves, cfg, ad.constant(video.frames[j]))
        frame_rows.append(row)
        local_blocks.append(local)
    per_frame = ad.concat(frame_rows, axis=0)
    local_grid = ad.concat(local_blocks, axis=0)
    if tape is not None:
        return per_frame, local_grid
    return per_frame.value, local_grid.value


@lru_cache(maxsize=8)
def _logmel_constants(sample_rate, window_ms, hop_ms, mel_bands):
    win = int(round(window_ms * sample_rate / 1000.0))
    hop = int(round(hop_ms * sample_rate / 1000.0))
    bins = win // 2 + 1
    n = np.arange(win)[:, None]
    k = np.arange(bins)[None, :]
    angle = 2.0 * np.pi * n * k / win
    window = hann_window(win)
    bank = mel_filterbank(mel_bands, win, sample_rate)
    return win, hop, window, np.cos(angle), -np.sin(angle), bank.T


def log_mel_graph(x, sample_rate, window_ms, hop_ms, mel_bands):
    """Differentiable log-mel via explicit DFT matrices (joint-flow path).

    Matches features.log_mel to float rounding; only used when gradients must
    flow from the embedders into the separator through the spectrogram.
    """
    win, hop, window, cos_m, sin_m, bank_t = _logmel_constants(
        sample_rate, window_ms, hop_ms, mel_bands)
    frames = ad.mul(ad.frame1d(x, win, hop), window[None, :])
    real = ad.matmul(frames, ad.constant(cos_m))
    imag = ad.matmul(frames, ad.constant(sin_m))
    power = ad.add(ad.square(real), ad.square(imag))
    energy = ad.matmul(power, ad.constant(bank_t))
    return ad.log(ad.maximum_const(energy, LOG_FLOOR_EPS))


def segment_graph(frames, win_windows, hop_windows):
    """Differentiable version of segment_spectrogram: list of (W, B) tensors."""
    f, bands = frames.value.shape
    if f < win_windows:
        padded_len = win_windows
    else:
        overhang = (f - win_windows) % hop_windows
        padded_len = f if overhang == 0 else f + (hop_windows - overhang)
    if padded_len > f:
        pad = ad.constant(np.full((padded_len - f, bands), LOG_FLOOR,
                                  dtype=frames.value.dtype))
        frames = ad.concat([frames, pad], axis=0)
    count = 1 + (padded_len - win_windows) // hop_windows
    return [ad.slice_axis(frames, 0, s * hop_windows, s * hop_windows + win_windows)
            for s in range(count)]
