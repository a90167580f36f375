"""Finite-difference verification of every autodiff primitive and the
composed layers. Central differences, h=1e-5, float64."""

import numpy as np
import pytest

from mixitkit import autodiff as ad
from mixitkit.model import layers

H = 1e-5
RTOL = 1e-6


def numeric_grad(f, x, h=H):
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.ravel()
    gf = g.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        hi = f(x)
        flat[i] = orig - h
        lo = f(x)
        flat[i] = orig
        gf[i] = (hi - lo) / (2 * h)
    return g


def check(build, x, rtol=1e-4):
    """build maps a leaf tensor to a scalar tensor."""
    x = np.asarray(x, dtype=np.float64)
    leaf = ad.Tensor(x.copy())
    out = build(leaf)
    grads = ad.backward(out)
    analytic = ad.grad_of(grads, leaf)
    numeric = numeric_grad(lambda v: float(build(ad.Tensor(v)).value), x)
    scale = np.maximum(np.abs(numeric), 1e-3)
    assert np.max(np.abs(analytic - numeric) / scale) < rtol


rng = np.random.default_rng(42)


@pytest.mark.parametrize("op", [
    lambda t: ad.reduce_sum(ad.square(ad.add(t, 1.5))),
    lambda t: ad.reduce_sum(ad.square(ad.sub(t, 0.5))),
    lambda t: ad.reduce_sum(ad.mul(t, t)),
    lambda t: ad.reduce_sum(ad.div(t, ad.add(ad.square(t), 2.0))),
    lambda t: ad.reduce_sum(ad.exp(ad.mul(t, 0.3))),
    lambda t: ad.reduce_sum(ad.log(ad.add(ad.square(t), 1.0))),
    lambda t: ad.reduce_sum(ad.sqrt(ad.add(ad.square(t), 1.0))),
    lambda t: ad.reduce_sum(ad.tanh(t)),
    lambda t: ad.reduce_sum(ad.sigmoid(t)),
    lambda t: ad.reduce_sum(ad.square(ad.relu(ad.add(t, 0.05)))),
    lambda t: ad.reduce_sum(ad.square(ad.softmax_1d(ad.reshape(t, (12,))))),
    lambda t: ad.reduce_sum(ad.square(ad.reduce_mean(t, axis=1))),
    lambda t: ad.reduce_sum(ad.square(ad.reduce_sum(t, axis=0, keepdims=True))),
])
def test_elementwise_ops(op):
    check(lambda t: _to_scalar(op(t)), rng.standard_normal((3, 4)))


def _to_scalar(t):
    if t.value.ndim == 0:
        return t
    return ad.reduce_sum(t)


def test_matmul_both_sides():
    a0 = rng.standard_normal((3, 5))
    b0 = rng.standard_normal((5, 2))
    check(lambda t: ad.reduce_sum(ad.square(ad.matmul(t, ad.constant(b0)))), a0)
    check(lambda t: ad.reduce_sum(ad.square(ad.matmul(ad.constant(a0), t))), b0)


def test_broadcasting_bias_grad():
    x0 = rng.standard_normal((6, 4))
    b0 = rng.standard_normal(4)
    check(lambda t: ad.reduce_sum(ad.square(ad.add(ad.constant(x0), t))), b0)


def test_reshape_transpose_concat_slice_pad():
    x0 = rng.standard_normal((4, 6))
    check(lambda t: ad.reduce_sum(ad.square(ad.reshape(t, (6, 4)))), x0)
    check(lambda t: ad.reduce_sum(ad.square(ad.transpose(t))), x0)
    check(lambda t: ad.reduce_sum(ad.square(ad.concat([t, ad.mul(t, 2.0)], axis=0))), x0)
    check(lambda t: ad.reduce_sum(ad.square(ad.slice_axis(t, 1, 1, 4))), x0)
    check(lambda t: ad.reduce_sum(ad.square(ad.pad_axis(t, 0, 2, 1))), x0)


def test_gather_rows():
    x0 = rng.standard_normal((5, 3))
    idx = np.array([0, 2, 2, 4, 1, 0])
    check(lambda t: ad.reduce_sum(ad.square(ad.gather_rows(t, idx))), x0)


def test_maximum_const_and_clamp():
    x0 = np.linspace(-2.0, 2.0, 9)  # avoids the kink at the floor
    check(lambda t: ad.reduce_sum(ad.square(ad.maximum_const(t, 0.1))), x0 + 0.003)
    check(lambda t: ad.reduce_sum(ad.square(ad.clamp(t, -1.5, 1.5))), x0 + 0.003)


def test_frame_and_overlap_add_roundtrip():
    x0 = rng.standard_normal(64)
    check(lambda t: ad.reduce_sum(ad.square(ad.frame1d(t, 16, 8))), x0)
    f0 = rng.standard_normal((7, 16))
    check(lambda t: ad.reduce_sum(ad.square(ad.overlap_add(t, 8, 64))), f0)
    # non-divisible hop exercises the scatter fallback
    check(lambda t: ad.reduce_sum(ad.square(ad.frame1d(t, 15, 7))), x0)
    f1 = rng.standard_normal((5, 15))
    check(lambda t: ad.reduce_sum(ad.square(ad.overlap_add(t, 7, 50))), f1)


def test_overlap_add_matches_naive_scatter():
    frames = rng.standard_normal((9, 16))
    out = ad.overlap_add(ad.constant(frames), 8, 9 * 8 + 8).value
    naive = np.zeros(80)
    for i in range(9):
        naive[i * 8:i * 8 + 16] += frames[i]
    np.testing.assert_allclose(out, naive, rtol=0, atol=0)


def test_patches2d_matches_naive_conv():
    x = rng.standard_normal((8, 8, 3))
    k = rng.standard_normal((9 * 3, 5))
    patches = ad.patches2d(ad.constant(x), 3, 3, 2, 1)
    out = (patches.value.reshape(-1, 27) @ k).reshape(4, 4, 5)
    padded = np.pad(x, ((1, 1), (1, 1), (0, 0)))
    for i in range(4):
        for j in range(4):
            window = padded[2 * i:2 * i + 3, 2 * j:2 * j + 3, :].reshape(-1)
            np.testing.assert_allclose(out[i, j], window @ k, atol=1e-12)


def test_patches2d_gradient():
    x0 = rng.standard_normal((6, 5, 2))
    check(lambda t: ad.reduce_sum(ad.square(ad.patches2d(t, 3, 3, 2, 1))), x0)


def test_layer_compositions():
    x0 = rng.standard_normal((10, 4))
    slope = ad.constant(np.full(4, 0.25))
    check(lambda t: ad.reduce_sum(ad.square(layers.prelu(t, slope))), x0 + 0.01)
    gamma = ad.constant(rng.standard_normal(4))
    beta = ad.constant(rng.standard_normal(4))
    check(lambda t: ad.reduce_sum(ad.square(layers.instance_norm(t, gamma, beta))), x0)
    w = ad.constant(rng.standard_normal((3, 4)))
    b = ad.constant(rng.standard_normal(4))
    check(lambda t: ad.reduce_sum(ad.square(
        layers.depthwise_conv_time(t, w, b, dilation=2))), x0)


def test_depthwise_conv_dilation_semantics():
    x = np.zeros((9, 1))
    x[4, 0] = 1.0
    w = np.array([[1.0], [2.0], [3.0]])
    out = layers.depthwise_conv_time(
        ad.constant(x), ad.constant(w), ad.constant(np.zeros(1)), dilation=2).value
    # the impulse spreads to t-2 (tap 2), t (tap 1), t+2 (tap 0)
    expected = np.zeros((9, 1))
    expected[2, 0] = 3.0
    expected[4, 0] = 2.0
    expected[6, 0] = 1.0
    np.testing.assert_allclose(out, expected)


def test_backward_seed_scaling_and_detach():
    x0 = rng.standard_normal(5)
    leaf = ad.Tensor(x0.copy())
    out = ad.reduce_sum(ad.square(leaf))
    g1 = ad.grad_of(ad.backward(out), leaf)
    leaf2 = ad.Tensor(x0.copy())
    out2 = ad.reduce_sum(ad.square(leaf2))
    g2 = ad.grad_of(ad.backward(out2, seed=2.0), leaf2)
    np.testing.assert_allclose(g2, 2.0 * g1)

    leaf3 = ad.Tensor(x0.copy())
    cut = ad.detach(ad.square(leaf3))
    out3 = ad.reduce_sum(ad.mul(cut, leaf3))
    g3 = ad.grad_of(ad.backward(out3), leaf3)
    np.testing.assert_allclose(g3, x0 * x0)  # only the undetached factor


def test_zero_upstream_gives_zero_grads():
    leaf = ad.Tensor(rng.standard_normal((3, 3)))
    out = ad.reduce_sum(ad.tanh(leaf))
    g = ad.grad_of(ad.backward(out, seed=0.0), leaf)
    assert np.all(g == 0.0)
