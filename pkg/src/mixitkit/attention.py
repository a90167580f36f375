"""Shared attention operator and its pooling variants.

The operator maps a query row q, key matrix K, and value matrix V through
trainable dense layers: alpha = softmax(tanh(K W_k + b_k) tanh(q W_q + b_q)^T)
and out = alpha^T (V W_v + b_v). Note the asymmetry: the value projection is
not passed through tanh.

All functions accept plain numpy arrays or autodiff Tensors; the result type
follows the inputs, so the same code serves unit-level numerics and the
trainable model graph.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import InvalidInputError


@dataclass
class AttentionParams:
    """Dense-layer weights for the query/key/value maps.

    w_q: (query_dim, hidden)   b_q: (hidden,)
    w_k: (key_dim, hidden)     b_k: (hidden,)
    w_v: (value_dim, out_dim)  b_v: (out_dim,)
    """

    w_q: object
    b_q: object
    w_k: object
    b_k: object
    w_v: object
    b_v: object

    def fields(self):
        return (self.w_q, self.b_q, self.w_k, self.b_k, self.w_v, self.b_v)


def init_attention_params(rng, query_dim, key_dim, value_dim, hidden=None, out_dim=None):
    """Uniform +-1/sqrt(fan_in) init; hidden and out default to the input dims."""
    hidden = query_dim if hidden is None else hidden
    out_dim = value_dim if out_dim is None else out_dim

    def dense(fan_in, fan_out):
        bound = 1.0 / np.sqrt(fan_in)
        w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        b = rng.uniform(-bound, bound, size=(fan_out,))
        return w, b

    w_q, b_q = dense(query_dim, hidden)
    w_k, b_k = dense(key_dim, hidden)
    w_v, b_v = dense(value_dim, out_dim)
    return AttentionParams(w_q, b_q, w_k, b_k, w_v, b_v)


def _wants_graph(*items):
    return any(isinstance(x, ad.Tensor) for x in items)


def attend(q, keys, values, params: AttentionParams):
    """Attention over rows of ``keys``/``values`` with a single query row.

    Returns (output_row, alpha). alpha is nonnegative and sums to 1; the
    output is the alpha-weighted combination of the projected value rows.
    """
    graph = _wants_graph(q, keys, values, *params.fields())
    qv, kv, vv = ad.value_of(q), ad.value_of(keys), ad.value_of(values)
    if kv.ndim != 2 or vv.ndim != 2:
        raise InvalidInputError("keys and values must be 2-D matrices")
    if kv.shape[0] != vv.shape[0]:
        raise InvalidInputError(f"row-count mismatch: keys {kv.shape[0]}, values {vv.shape[0]}")
    if qv.ndim != 1:
        raise InvalidInputError(f"query must be a 1-D row, got shape {qv.shape}")

    q2 = ad.reshape(ad.as_tensor(q), (1, qv.shape[0]))
    fq = ad.tanh(ad.add(ad.matmul(q2, ad.as_tensor(params.w_q)), ad.as_tensor(params.b_q)))
    fk = ad.tanh(ad.add(ad.matmul(ad.as_tensor(keys), ad.as_tensor(params.w_k)),
                        ad.as_tensor(params.b_k)))
    logits = ad.reshape(ad.matmul(fk, ad.transpose(fq)), (kv.shape[0],))
    alpha = ad.softmax_1d(logits)
    fv = ad.add(ad.matmul(ad.as_tensor(values), ad.as_tensor(params.w_v)),
                ad.as_tensor(params.b_v))
    out = ad.reshape(ad.matmul(ad.reshape(alpha, (1, kv.shape[0])), fv), (fv.value.shape[1],))
    if graph:
        return out, alpha
    return out.value, alpha.value


def mean_row(z):
    """Arithmetic mean of the rows of a 2-D matrix."""
    zv = ad.value_of(z)
    if zv.ndim != 2 or zv.shape[0] < 1:
        raise InvalidInputError(f"need a nonempty 2-D matrix, got shape {zv.shape}")
    out = ad.reduce_mean(ad.as_tensor(z), axis=0)
    return out if _wants_graph(z) else out.value


def mean_pool(z):
    """Mean-pooling ablation: collapse an embedding sequence to its row mean."""
    return mean_row(z)


def pool_sequence(z, params: AttentionParams):
    """Attentional pooling: attend over the rows with the mean row as query."""
    zv = ad.value_of(z)
    if zv.ndim != 2 or zv.shape[0] < 1:
        raise InvalidInputError(f"need a nonempty 2-D matrix, got shape {zv.shape}")
    query = ad.reduce_mean(ad.as_tensor(z), axis=0)
    out, _ = attend(query if _wants_graph(z) else query.value, z, z, params)
    return out


def spatio_temporal_attend(z_audio, z_video_local, params: AttentionParams, grid_size):
    """Audio-queried attention over per-frame spatial grid embeddings.

    ``z_video_local`` has one row per (frame, grid cell); its row count must be
    divisible by grid_size**2. Returns (output_row, alpha_grid) where
    alpha_grid has shape (frames, grid_size, grid_size) for inspection.
    """
    rows = ad.value_of(z_video_local).shape[0]
    cells = grid_size * grid_size
    if rows % cells != 0:
        raise InvalidInputError(
            f"{rows} rows not divisible by grid {grid_size}x{grid_size}"
        )
    frames = rows // cells
    out, alpha = attend(z_audio, z_video_local, z_video_local, params)
    if isinstance(alpha, ad.Tensor):
        alpha_grid = ad.reshape(alpha, (frames, grid_size, grid_size))
    else:
        alpha_grid = alpha.reshape(frames, grid_size, grid_size)
    return out, alpha_grid
