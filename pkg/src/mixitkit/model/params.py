"""Flat parameter vector with a named index of every tensor.

All trainable weights live in one contiguous float array; each named tensor
is a (offset, shape) slice of it. The optimizer sees the flat vector, the
forward pass materializes per-tensor autodiff leaves, and checkpoints store
the vector plus the index.
"""

from collections import OrderedDict

import numpy as np

from .. import autodiff as ad
from ..errors import InvalidInputError
from .config import EmbedderConfig, SeparatorConfig

PRELU_INIT = 0.25


class ModelParams:
    """data: flat parameter vector; index: name -> (offset, shape)."""

    def __init__(self, data, index):
        self.data = np.asarray(data)
        self.index = OrderedDict(index)
        total = sum(int(np.prod(shape)) for _, shape in self.index.values())
        if total != self.data.size:
            raise InvalidInputError(f"index covers {total} values, vector has {self.data.size}")

    def names(self):
        return list(self.index.keys())

    def view(self, name):
        """Writable view of one named tensor (shares memory with the vector)."""
        offset, shape = self.index[name]
        return self.data[offset:offset + int(np.prod(shape))].reshape(shape)

    def leaf(self, name):
        """A fresh autodiff leaf holding a copy of one named tensor."""
        return ad.Tensor(self.view(name).copy(), name=name)

    def make_leaves(self):
        return OrderedDict((name, self.leaf(name)) for name in self.index)

    def copy(self):
        return ModelParams(self.data.copy(), self.index)

    def astype(self, dtype):
        return ModelParams(self.data.astype(dtype), self.index)

    def slice_of(self, name):
        offset, shape = self.index[name]
        return slice(offset, offset + int(np.prod(shape)))

    def gather_flat(self, named_grads):
        """Assemble per-tensor gradients into a flat vector (zeros elsewhere)."""
        flat = np.zeros_like(self.data)
        for name, grad in named_grads.items():
            flat[self.slice_of(name)] = np.asarray(grad).ravel()
        return flat


class _Builder:
    def __init__(self, rng, dtype):
        self.rng = rng
        self.dtype = dtype
        self.index = OrderedDict()
        self.chunks = []
        self.offset = 0

    def _register(self, name, values):
        values = np.asarray(values, dtype=self.dtype)
        self.index[name] = (self.offset, values.shape)
        self.chunks.append(values.ravel())
        self.offset += values.size

    def dense(self, name, fan_in, fan_out):
        bound = 1.0 / np.sqrt(fan_in)
        self._register(f"{name}.w", self.rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        self._register(f"{name}.b", self.rng.uniform(-bound, bound, size=(fan_out,)))

    def prelu(self, name, channels):
        self._register(name, np.full(channels, PRELU_INIT))

    def norm(self, name, channels):
        self._register(f"{name}.gamma", np.ones(channels))
        self._register(f"{name}.beta", np.zeros(channels))

    def raw(self, name, shape, fan_in):
        bound = 1.0 / np.sqrt(fan_in)
        self._register(name, self.rng.uniform(-bound, bound, size=shape))

    def finish(self):
        data = np.concatenate(self.chunks) if self.chunks else np.zeros(0, dtype=self.dtype)
        return ModelParams(data, self.index)


def init_model_params(rng, sep_cfg: SeparatorConfig, emb_cfg: EmbedderConfig,
                      dtype=np.float64) -> ModelParams:
    """Initialize every named tensor of the full model.

    Weights are uniform in +-1/sqrt(fan_in), PReLU slopes start at 0.25,
    norm scales at 1 and shifts at 0. Conditioning tensors exist only when
    the separator is video-conditioned.
    """
    b = _Builder(rng, dtype)

    # separator
    b.dense("sep.enc", sep_cfg.encoder_kernel, sep_cfg.encoder_filters)
    b.dense("sep.proj", sep_cfg.encoder_filters, sep_cfg.bottleneck_dim)
    if sep_cfg.condition_on_video:
        b.dense("sep.cond", emb_cfg.embed_dim, sep_cfg.cond_dim)
    block_in = sep_cfg.bottleneck_dim + (sep_cfg.cond_dim if sep_cfg.condition_on_video else 0)
    for i in range(sep_cfg.num_blocks):
        p = f"sep.block{i}"
        b.dense(f"{p}.in", block_in, sep_cfg.hidden_dim)
        b.prelu(f"{p}.prelu1", sep_cfg.hidden_dim)
        b.norm(f"{p}.norm1", sep_cfg.hidden_dim)
        b.raw(f"{p}.dw.w", (3, sep_cfg.hidden_dim), fan_in=3)
        b.raw(f"{p}.dw.b", (sep_cfg.hidden_dim,), fan_in=3)
        b.prelu(f"{p}.prelu2", sep_cfg.hidden_dim)
        b.norm(f"{p}.norm2", sep_cfg.hidden_dim)
        b.dense(f"{p}.out", sep_cfg.hidden_dim, sep_cfg.bottleneck_dim)
    b.dense("sep.mask", sep_cfg.bottleneck_dim, sep_cfg.num_sources * sep_cfg.encoder_filters)
    b.raw("sep.dec.w", (sep_cfg.encoder_filters, sep_cfg.encoder_kernel),
          fan_in=sep_cfg.encoder_filters)
    b.raw("sep.dec.b", (), fan_in=sep_cfg.encoder_filters)

    # audio embedder: two stride-2 3x3 convs then a dense head
    ch1, ch2 = emb_cfg.audio_channels
    b.dense("aemb.conv1", 9 * 1, ch1)
    b.dense("aemb.conv2", 9 * ch1, ch2)
    b.dense("aemb.out", ch2, emb_cfg.embed_dim)

    # video embedder: stride-1 conv for the local grid, stride-2 conv + dense
    # for the per-frame embedding
    vc = emb_cfg.video_conv_channels
    fc = emb_cfg.video_frame_channels
    b.dense("vemb.conv1", 9 * emb_cfg.video_channels_in, vc)
    b.dense("vemb.local", vc, emb_cfg.local_dim)
    b.dense("vemb.conv2", 9 * vc, fc)
    b.dense("vemb.out", fc, emb_cfg.embed_dim)

    # attention parameter triples: audio pooling, global video pooling,
    # audio-queried spatio-temporal attention
    n, h, dl = emb_cfg.embed_dim, emb_cfg.attention_hidden, emb_cfg.local_dim
    for scope, (dq, dk, dv, dout) in (
        ("att.audio", (n, n, n, n)),
        ("att.video", (n, n, n, n)),
        ("att.st", (n, dl, dl, dl)),
    ):
        b.raw(f"{scope}.wq", (dq, h), fan_in=dq)
        b.raw(f"{scope}.bq", (h,), fan_in=dq)
        b.raw(f"{scope}.wk", (dk, h), fan_in=dk)
        b.raw(f"{scope}.bk", (h,), fan_in=dk)
        b.raw(f"{scope}.wv", (dv, dout), fan_in=dv)
        b.raw(f"{scope}.bv", (dout,), fan_in=dv)

    b.dense("cls", 2 * n + dl, 1)
    return b.finish()
