"""Eager reverse-mode automatic differentiation on numpy arrays.

Every operation computes its value immediately and records, per input, a
closure mapping the upstream gradient to that input's gradient contribution.
``backward`` replays the recorded graph in reverse topological order. There
is no dtype magic: float64 leaves give float64 gradients, float32 leaves
float32.

Only the handful of primitives the toy networks need are provided; anything
else (softmax, instance norm, PReLU, convolutions) is composed from them in
the model code.
"""

import numpy as np

from .errors import InvalidInputError


class Tensor:
    """A node in the computation graph. Leaves have no parents."""

    __slots__ = ("value", "parents", "name")

    def __init__(self, value, parents=(), name=None):
        self.value = np.asarray(value)
        self.parents = parents
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        tag = f" {self.name!r}" if self.name else ""
        return f"Tensor{tag}(shape={self.value.shape})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x))


def constant(x, name=None):
    return Tensor(np.asarray(x), name=name)


def detach(x):
    """Cut the graph: same value, no parents."""
    return Tensor(x.value if isinstance(x, Tensor) else np.asarray(x))


def value_of(x):
    return x.value if isinstance(x, Tensor) else np.asarray(x)


def _unbroadcast(grad, shape):
    """Reduce a broadcast gradient back to the original operand shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return Tensor(a.value + b.value, (
        (a, lambda g: _unbroadcast(g, a.value.shape)),
        (b, lambda g: _unbroadcast(g, b.value.shape)),
    ))


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return Tensor(a.value - b.value, (
        (a, lambda g: _unbroadcast(g, a.value.shape)),
        (b, lambda g: _unbroadcast(-g, b.value.shape)),
    ))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return Tensor(a.value * b.value, (
        (a, lambda g: _unbroadcast(g * b.value, a.value.shape)),
        (b, lambda g: _unbroadcast(g * a.value, b.value.shape)),
    ))


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return Tensor(a.value / b.value, (
        (a, lambda g: _unbroadcast(g / b.value, a.value.shape)),
        (b, lambda g: _unbroadcast(-g * a.value / (b.value * b.value), b.value.shape)),
    ))


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.value.ndim != 2 or b.value.ndim != 2:
        raise InvalidInputError("matmul supports 2-D operands only")
    return Tensor(a.value @ b.value, (
        (a, lambda g: g @ b.value.T),
        (b, lambda g: a.value.T @ g),
    ))


def reduce_sum(a, axis=None, keepdims=False):
    a = as_tensor(a)
    shape = a.value.shape

    def grad(g):
        if axis is None:
            return np.broadcast_to(g, shape).copy()
        g2 = g if keepdims else np.expand_dims(g, axis)
        return np.broadcast_to(g2, shape).copy()

    return Tensor(a.value.sum(axis=axis, keepdims=keepdims), ((a, grad),))


def reduce_mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    n = a.value.size if axis is None else a.value.shape[axis]
    return mul(reduce_sum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def reshape(a, shape):
    a = as_tensor(a)
    old = a.value.shape
    return Tensor(a.value.reshape(shape), ((a, lambda g: g.reshape(old)),))


def transpose(a, axes=None):
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.value.ndim)))
    inverse = np.argsort(axes)
    return Tensor(np.transpose(a.value, axes), ((a, lambda g: np.transpose(g, inverse)),))


def concat(parts, axis=0):
    parts = [as_tensor(p) for p in parts]
    sizes = [p.value.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def make_grad(i):
        sl = [slice(None)] * parts[i].value.ndim
        sl[axis] = slice(offsets[i], offsets[i + 1])
        sl = tuple(sl)
        return lambda g: g[sl]

    return Tensor(
        np.concatenate([p.value for p in parts], axis=axis),
        tuple((parts[i], make_grad(i)) for i in range(len(parts))),
    )


def slice_axis(a, axis, start, stop):
    a = as_tensor(a)
    sl = [slice(None)] * a.value.ndim
    sl[axis] = slice(start, stop)
    sl = tuple(sl)
    shape = a.value.shape

    def grad(g):
        out = np.zeros(shape, dtype=g.dtype)
        out[sl] = g
        return out

    return Tensor(a.value[sl], ((a, grad),))


def pad_axis(a, axis, before, after):
    a = as_tensor(a)
    widths = [(0, 0)] * a.value.ndim
    widths[axis] = (before, after)
    sl = [slice(None)] * a.value.ndim
    sl[axis] = slice(before, before + a.value.shape[axis])
    sl = tuple(sl)
    return Tensor(np.pad(a.value, widths), ((a, lambda g: g[sl]),))


def gather_rows(a, indices):
    """Row gather along axis 0 (used for nearest-neighbor upsampling)."""
    a = as_tensor(a)
    idx = np.asarray(indices)
    shape = a.value.shape

    def grad(g):
        out = np.zeros(shape, dtype=g.dtype)
        np.add.at(out, idx, g)
        return out

    return Tensor(a.value[idx], ((a, grad),))


def exp(a):
    a = as_tensor(a)
    v = np.exp(a.value)
    return Tensor(v, ((a, lambda g: g * v),))


def log(a):
    a = as_tensor(a)
    return Tensor(np.log(a.value), ((a, lambda g: g / a.value),))


def sqrt(a):
    a = as_tensor(a)
    v = np.sqrt(a.value)
    return Tensor(v, ((a, lambda g: g / (2.0 * v)),))


def square(a):
    a = as_tensor(a)
    return Tensor(np.square(a.value), ((a, lambda g: g * 2.0 * a.value),))


def tanh(a):
    a = as_tensor(a)
    v = np.tanh(a.value)
    return Tensor(v, ((a, lambda g: g * (1.0 - v * v)),))


def sigmoid(a):
    a = as_tensor(a)
    v = 1.0 / (1.0 + np.exp(-a.value))
    return Tensor(v, ((a, lambda g: g * v * (1.0 - v)),))


def relu(a):
    a = as_tensor(a)
    mask = a.value > 0
    return Tensor(a.value * mask, ((a, lambda g: g * mask),))


def maximum_const(a, floor):
    """max(a, floor); gradient passes only where a > floor."""
    a = as_tensor(a)
    mask = a.value > floor
    return Tensor(np.maximum(a.value, floor), ((a, lambda g: g * mask),))


def clamp(a, lo, hi):
    a = as_tensor(a)
    mask = (a.value > lo) & (a.value < hi)
    return Tensor(np.clip(a.value, lo, hi), ((a, lambda g: g * mask),))


def softmax_1d(a):
    """Numerically stable softmax of a 1-D tensor (shift by detached max)."""
    a = as_tensor(a)
    shifted = sub(a, float(a.value.max()))
    e = exp(shifted)
    return div(e, reduce_sum(e))


def _frame_gather(x, window, hop, n):
    view = np.lib.stride_tricks.sliding_window_view(x, window)[::hop]
    return np.ascontiguousarray(view[:n])


def _frame_scatter(frames, window, hop, out_len):
    n = frames.shape[0]
    out = np.zeros(out_len, dtype=frames.dtype)
    if window % hop == 0:
        # tap-group columns land on contiguous sample runs
        for j in range(window // hop):
            seg = frames[:, j * hop:(j + 1) * hop].ravel()
            out[j * hop:j * hop + seg.shape[0]] += seg
    else:
        idx = np.arange(window)[None, :] + hop * np.arange(n)[:, None]
        np.add.at(out, idx.ravel(), frames.ravel())
    return out


def frame1d(a, window, hop):
    """Sliding windows of a 1-D signal: (1 + (T - window)//hop, window)."""
    a = as_tensor(a)
    t = a.value.shape[0]
    n = 1 + (t - window) // hop
    return Tensor(_frame_gather(a.value, window, hop, n),
                  ((a, lambda g: _frame_scatter(g, window, hop, t)),))


def overlap_add(frames, hop, out_len):
    """Transposed framing: sum (n, L) frames into a signal of out_len samples."""
    frames = as_tensor(frames)
    n, window = frames.value.shape
    return Tensor(_frame_scatter(frames.value, window, hop, out_len),
                  ((frames, lambda g: _frame_gather(g, window, hop, n)),))


_PATCH_INDEX_CACHE = {}


def _patch_index(h, w, c, kh, kw, stride, pad):
    key = (h, w, c, kh, kw, stride, pad)
    cached = _PATCH_INDEX_CACHE.get(key)
    if cached is not None:
        return cached
    hp, wp = h + 2 * pad, w + 2 * pad
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1
    ii = (stride * np.arange(ho)[:, None, None, None, None]
          + np.arange(kh)[None, None, :, None, None])
    jj = (stride * np.arange(wo)[None, :, None, None, None]
          + np.arange(kw)[None, None, None, :, None])
    cc = np.arange(c)[None, None, None, None, :]
    flat = ((ii * wp + jj) * c + cc).reshape(ho, wo, kh * kw * c)
    _PATCH_INDEX_CACHE[key] = (flat, hp, wp, ho, wo)
    return _PATCH_INDEX_CACHE[key]


def patches2d(a, kh, kw, stride, pad):
    """im2col: (H, W, C) -> (Ho, Wo, kh*kw*C) with zero padding.

    Ho = (H + 2*pad - kh)//stride + 1 and likewise Wo; a following matmul with
    a (kh*kw*C, Cout) kernel matrix implements a 2-D convolution.
    """
    a = as_tensor(a)
    h, w, c = a.value.shape
    flat, hp, wp, _, _ = _patch_index(h, w, c, kh, kw, stride, pad)

    def grad(g):
        buf = np.zeros(hp * wp * c, dtype=g.dtype)
        np.add.at(buf, flat.ravel(), g.ravel())
        padded = buf.reshape(hp, wp, c)
        return padded[pad:pad + h, pad:pad + w, :]

    padded = np.pad(a.value, ((pad, pad), (pad, pad), (0, 0)))
    return Tensor(padded.ravel()[flat], ((a, grad),))


def backward(root, seed=None):
    """Accumulate gradients of ``root`` w.r.t. every node reachable from it.

    Returns a dict keyed by id(tensor); use ``grad_of`` for lookups. ``seed``
    defaults to ones_like(root.value).
    """
    if seed is None:
        seed = np.ones_like(root.value)
    else:
        seed = np.broadcast_to(np.asarray(seed, dtype=root.value.dtype), root.value.shape)

    order = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent, _ in node.parents:
            if id(parent) not in visited:
                stack.append((parent, False))

    grads = {id(root): np.array(seed, dtype=root.value.dtype)}
    for node in reversed(order):
        g = grads.get(id(node))
        if g is None:
            continue
        for parent, grad_fn in node.parents:
            contribution = grad_fn(g)
            existing = grads.get(id(parent))
            if existing is None:
                grads[id(parent)] = contribution
            else:
                grads[id(parent)] = existing + contribution
    return grads


def grad_of(grads, tensor):
    """Gradient of a tensor from a ``backward`` result; zeros if unreached."""
    g = grads.get(id(tensor))
    if g is None:
        return np.zeros_like(tensor.value)
    return g
