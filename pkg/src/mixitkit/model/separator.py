"""Masking separator: strided conv encoder, dilated conv blocks with skip
residuals, sigmoid mask head, transposed-conv decoder, mixture consistency."""

import numpy as np

from .. import autodiff as ad
from ..audio import SourceStack, Waveform
from ..errors import InvalidInputError
from . import layers
from .config import SeparatorConfig


def encoder_frame_count(cfg: SeparatorConfig, num_samples):
    if num_samples % cfg.encoder_stride != 0 or num_samples < cfg.encoder_kernel:
        raise InvalidInputError(
            f"input length {num_samples} must be a multiple of stride "
            f"{cfg.encoder_stride} and at least one kernel ({cfg.encoder_kernel})"
        )
    return num_samples // cfg.encoder_stride


def encode_mixture(params, cfg: SeparatorConfig, mixture: Waveform):
    """Encoder activations as a (frames, filters) array.

    The input is right-padded by kernel - stride zeros so a T-sample input
    yields exactly T / stride frames.
    """
    leaves = params.make_leaves() if hasattr(params, "make_leaves") else params
    t = _encode(leaves, cfg, ad.constant(mixture.samples))
    return t.value


def _encode(leaves, cfg, x):
    frames = encoder_frame_count(cfg, x.value.shape[0])
    padded = ad.pad_axis(x, 0, 0, cfg.encoder_kernel - cfg.encoder_stride)
    windows = ad.frame1d(padded, cfg.encoder_kernel, cfg.encoder_stride)
    enc = layers.dense(leaves, "sep.enc", windows)
    assert enc.value.shape[0] == frames
    return enc


def _decode(leaves, cfg, coeffs, num_samples):
    frames = ad.matmul(coeffs, leaves["sep.dec.w"])
    full = ad.overlap_add(frames, cfg.encoder_stride,
                          num_samples + cfg.encoder_kernel - cfg.encoder_stride)
    return ad.add(ad.slice_axis(full, 0, 0, num_samples), leaves["sep.dec.b"])


def separator_graph(leaves, cfg: SeparatorConfig, x, cond_features=None):
    """Full separator on the tape. x is a (T,) tensor; cond_features, when
    conditioning is on, is a (frames, cond_dim) tensor concatenated at the
    input of every block. Returns the (M, T) consistency-projected stack."""
    t = x.value.shape[0]
    enc = _encode(leaves, cfg, x)
    frames = enc.value.shape[0]
    if cfg.condition_on_video:
        if cond_features is None:
            raise InvalidInputError("separator is video-conditioned but no conditioning given")
        if cond_features.value.shape != (frames, cfg.cond_dim):
            raise InvalidInputError(
                f"conditioning must be ({frames}, {cfg.cond_dim}), "
                f"got {cond_features.value.shape}"
            )

    skips_into = {}
    for src, dst in cfg.skip_connections:
        skips_into.setdefault(dst, []).append(src)

    hidden = ad.matmul(enc, leaves["sep.proj.w"])
    hidden = ad.add(hidden, leaves["sep.proj.b"])
    outputs = []
    current = hidden
    for i in range(cfg.num_blocks):
        base = current
        for src in skips_into.get(i, ()):
            base = ad.add(base, outputs[src])
        block_in = base
        if cfg.condition_on_video:
            block_in = ad.concat([base, cond_features], axis=1)
        p = f"sep.block{i}"
        a = layers.dense(leaves, f"{p}.in", block_in)
        a = layers.prelu(a, leaves[f"{p}.prelu1"])
        a = layers.instance_norm(a, leaves[f"{p}.norm1.gamma"], leaves[f"{p}.norm1.beta"])
        a = layers.depthwise_conv_time(a, leaves[f"{p}.dw.w"], leaves[f"{p}.dw.b"],
                                       cfg.dilation(i))
        a = layers.prelu(a, leaves[f"{p}.prelu2"])
        a = layers.instance_norm(a, leaves[f"{p}.norm2.gamma"], leaves[f"{p}.norm2.beta"])
        res = layers.dense(leaves, f"{p}.out", a)
        current = ad.add(base, res)
        outputs.append(current)

    masks = ad.sigmoid(layers.dense(leaves, "sep.mask", current))
    masks = ad.reshape(masks, (frames, cfg.num_sources, cfg.encoder_filters))
    masked = ad.mul(masks, ad.reshape(enc, (frames, 1, cfg.encoder_filters)))

    rows = []
    for m in range(cfg.num_sources):
        coeff = ad.reshape(ad.slice_axis(masked, 1, m, m + 1),
                           (frames, cfg.encoder_filters))
        rows.append(ad.reshape(_decode(leaves, cfg, coeff, t), (1, t)))
    stack = ad.concat(rows, axis=0)

    # mixture consistency: distribute the residual uniformly
    total = ad.reduce_sum(stack, axis=0, keepdims=True)
    residual = ad.mul(ad.sub(ad.reshape(x, (1, t)), total), 1.0 / cfg.num_sources)
    return ad.add(stack, residual)


def separator_forward(params, cfg: SeparatorConfig, mixture: Waveform,
                      video_embed=None, tape=None) -> SourceStack:
    """Separate a mixture into M sources that sum back to it.

    ``video_embed`` is the (F_v, N) per-frame video embedding matrix; it is
    required when the config conditions on video and ignored otherwise. Pass
    a GradientTape to keep the graph for a backward pass (the stack tensor is
    stored under tape.outputs["stack"]).
    """
    leaves = tape.leaves if tape is not None else params.make_leaves()
    x = ad.constant(np.asarray(mixture.samples, dtype=leaves["sep.enc.w"].value.dtype))
    cond = None
    if cfg.condition_on_video:
        if video_embed is None:
            raise InvalidInputError("condition_on_video=True requires video_embed")
        frames = encoder_frame_count(cfg, len(mixture))
        cond_rows = layers.dense(leaves, "sep.cond", ad.as_tensor(video_embed))
        cond = layers.nearest_upsample_rows(cond_rows, frames)
    stack = separator_graph(leaves, cfg, x, cond)
    if tape is not None:
        tape.outputs["stack"] = stack
    return SourceStack(stack.value, mixture.sample_rate)
