"""Layer builders shared by the separator and the embedders.

These all operate on autodiff Tensors; ``leaves`` is a dict of named
parameter tensors produced by ModelParams.
"""

import numpy as np

from .. import autodiff as ad

INSTANCE_NORM_EPS = 1e-5


def dense(leaves, name, x):
    """x @ w + b for the named dense layer; x is (rows, fan_in)."""
    return ad.add(ad.matmul(x, leaves[f"{name}.w"]), leaves[f"{name}.b"])


def prelu(x, slope):
    """max(x, 0) + slope * min(x, 0), slope broadcast over the last axis."""
    return ad.sub(ad.relu(x), ad.mul(slope, ad.relu(ad.mul(x, -1.0))))


def instance_norm(x, gamma, beta):
    """Normalize each channel over the time axis (axis 0) of a (T, C) tensor."""
    mu = ad.reduce_mean(x, axis=0, keepdims=True)
    centered = ad.sub(x, mu)
    var = ad.reduce_mean(ad.square(centered), axis=0, keepdims=True)
    normed = ad.div(centered, ad.sqrt(ad.add(var, INSTANCE_NORM_EPS)))
    return ad.add(ad.mul(normed, gamma), beta)


def depthwise_conv_time(x, w, b, dilation):
    """Per-channel kernel-3 conv along axis 0 with symmetric zero padding.

    x is (T, C), w is (3, C), b is (C,); output keeps shape (T, C).
    """
    t = x.value.shape[0]
    padded = ad.pad_axis(x, 0, dilation, dilation)
    acc = None
    for k in range(3):
        tap = ad.mul(ad.slice_axis(padded, 0, k * dilation, k * dilation + t),
                     ad.slice_axis(w, 0, k, k + 1))
        acc = tap if acc is None else ad.add(acc, tap)
    return ad.add(acc, b)


def conv2d(leaves, name, x, stride, pad):
    """3x3 convolution via im2col: x is (H, W, Cin) -> (Ho, Wo, Cout)."""
    patches = ad.patches2d(x, 3, 3, stride, pad)
    ho, wo, k = patches.value.shape
    flat = ad.reshape(patches, (ho * wo, k))
    out = dense(leaves, name, flat)
    return ad.reshape(out, (ho, wo, out.value.shape[1]))


def relu(x):
    return ad.relu(x)


def spatial_mean(x):
    """(H, W, C) -> (1, C) global average."""
    h, w, c = x.value.shape
    return ad.reshape(ad.reduce_mean(ad.reshape(x, (h * w, c)), axis=0), (1, c))


def nearest_upsample_rows(x, out_rows):
    """Repeat rows of (R, D) so row t of the output is row floor(t*R/out)."""
    r = x.value.shape[0]
    idx = np.minimum((np.arange(out_rows) * r) // out_rows, r - 1)
    return ad.gather_rows(x, idx)
