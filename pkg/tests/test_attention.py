import numpy as np
import pytest

from mixitkit import autodiff as ad
from mixitkit.attention import (AttentionParams, attend, init_attention_params,
                                mean_pool, pool_sequence, spatio_temporal_attend)
from mixitkit.errors import InvalidInputError

rng = np.random.default_rng(11)


def make_params(dq=6, dk=6, dv=6, hidden=5, out=4):
    return init_attention_params(rng, dq, dk, dv, hidden=hidden, out_dim=out)


def oracle_attend(q, keys, values, p):
    """Straight-line dense + tanh + softmax reimplementation."""
    fq = np.tanh(q @ p.w_q + p.b_q)
    fk = np.tanh(keys @ p.w_k + p.b_k)
    logits = fk @ fq
    e = np.exp(logits - logits.max())
    alpha = e / e.sum()
    fv = values @ p.w_v + p.b_v
    return alpha @ fv, alpha


def test_single_row_ignores_query():
    p = make_params()
    v = rng.standard_normal((1, 6))
    out1, alpha1 = attend(rng.standard_normal(6), v, v, p)
    out2, alpha2 = attend(rng.standard_normal(6), v, v, p)
    np.testing.assert_allclose(alpha1, [1.0])
    np.testing.assert_allclose(out1, out2)
    np.testing.assert_allclose(out1, (v @ p.w_v + p.b_v)[0])


def test_identical_keys_give_uniform_alpha():
    p = make_params()
    keys = np.tile(rng.standard_normal(6), (5, 1))
    values = rng.standard_normal((5, 6))
    _, alpha = attend(rng.standard_normal(6), keys, values, p)
    np.testing.assert_allclose(alpha, np.full(5, 0.2), atol=1e-12)


def test_attend_matches_straight_line_oracle():
    p = make_params()
    q = rng.standard_normal(6)
    keys = rng.standard_normal((7, 6))
    values = rng.standard_normal((7, 6))
    out, alpha = attend(q, keys, values, p)
    oracle_out, oracle_alpha = oracle_attend(q, keys, values, p)
    np.testing.assert_allclose(out, oracle_out, atol=1e-6)
    np.testing.assert_allclose(alpha, oracle_alpha, atol=1e-6)


def test_alpha_is_a_distribution_and_output_in_hull():
    p = make_params()
    q = rng.standard_normal(6)
    keys = rng.standard_normal((9, 6))
    values = rng.standard_normal((9, 6))
    out, alpha = attend(q, keys, values, p)
    assert np.all(alpha >= 0)
    assert abs(alpha.sum() - 1.0) <= 1e-6
    fv = values @ p.w_v + p.b_v
    assert np.all(out >= fv.min(axis=0) - 1e-9)
    assert np.all(out <= fv.max(axis=0) + 1e-9)


def test_joint_permutation_invariance():
    p = make_params()
    q = rng.standard_normal(6)
    keys = rng.standard_normal((8, 6))
    values = rng.standard_normal((8, 6))
    out, alpha = attend(q, keys, values, p)
    perm = rng.permutation(8)
    out_p, alpha_p = attend(q, keys[perm], values[perm], p)
    np.testing.assert_allclose(out_p, out, atol=1e-12)
    np.testing.assert_allclose(alpha_p, alpha[perm], atol=1e-12)


def test_row_count_mismatch_raises():
    p = make_params()
    with pytest.raises(InvalidInputError):
        attend(rng.standard_normal(6), rng.standard_normal((3, 6)),
               rng.standard_normal((4, 6)), p)


def test_attend_gradients_match_finite_differences():
    h = 1e-5
    p = make_params(dq=4, dk=4, dv=4, hidden=3, out=3)
    q0 = rng.standard_normal(4)
    k0 = rng.standard_normal((5, 4))
    v0 = rng.standard_normal((5, 4))

    def loss_value(q, keys, values, params):
        out, _ = attend(q, keys, values, params)
        return float(np.sum(out ** 2))

    q_t = ad.Tensor(q0.copy())
    k_t = ad.Tensor(k0.copy())
    v_t = ad.Tensor(v0.copy())
    leaf_params = AttentionParams(*[ad.Tensor(np.array(f, dtype=np.float64))
                                    for f in p.fields()])
    out, _ = attend(q_t, k_t, v_t, leaf_params)
    grads = ad.backward(ad.reduce_sum(ad.square(out)))

    for leaf, base in [(q_t, q0), (k_t, k0), (v_t, v0)] + list(
            zip(leaf_params.fields(), p.fields())):
        analytic = ad.grad_of(grads, leaf)
        base = np.asarray(base, dtype=np.float64)
        numeric = np.zeros_like(base)
        it = np.nditer(base, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index

            def eval_at(delta):
                mod = {id(q_t): q0.copy(), id(k_t): k0.copy(), id(v_t): v0.copy()}
                fields = [np.array(f, dtype=np.float64) for f in p.fields()]
                targets = [mod[id(q_t)], mod[id(k_t)], mod[id(v_t)]] + fields
                leaves = [q_t, k_t, v_t] + list(leaf_params.fields())
                target = targets[leaves.index(leaf)]
                target[idx] += delta
                pp = AttentionParams(*fields)
                return loss_value(targets[0], targets[1], targets[2], pp)

            numeric[idx] = (eval_at(h) - eval_at(-h)) / (2 * h)
            it.iternext()
        scale = np.maximum(np.abs(numeric), 1e-3)
        assert np.max(np.abs(analytic - numeric) / scale) <= 1e-4


def test_pool_sequence_degenerate_rows():
    p = make_params()
    v = rng.standard_normal(6)
    z = np.tile(v, (4, 1))
    out = pool_sequence(z, p)
    np.testing.assert_allclose(out, v @ p.w_v + p.b_v, atol=1e-9)
    single = rng.standard_normal((1, 6))
    np.testing.assert_allclose(pool_sequence(single, p),
                               (single @ p.w_v + p.b_v)[0], atol=1e-12)


def test_pool_sequence_equals_mean_query_attend():
    p = make_params()
    z = rng.standard_normal((6, 6))
    out = pool_sequence(z, p)
    expected, _ = attend(z.mean(axis=0), z, z, p)
    np.testing.assert_allclose(out, expected, atol=1e-12)


def test_pool_sequence_empty_raises():
    p = make_params()
    with pytest.raises(InvalidInputError):
        pool_sequence(np.zeros((0, 6)), p)


def test_spatio_temporal_single_cell():
    p = make_params(dq=6, dk=6, dv=6, hidden=5, out=4)
    cell = rng.standard_normal((1, 6))
    out, grid = spatio_temporal_attend(rng.standard_normal(6), cell, p, grid_size=1)
    np.testing.assert_allclose(out, (cell @ p.w_v + p.b_v)[0], atol=1e-12)
    assert grid.shape == (1, 1, 1)


def test_spatio_temporal_duplication_invariance():
    p = make_params()
    q = rng.standard_normal(6)
    z = rng.standard_normal((8, 6))  # 2 frames of a 2x2 grid
    out1, _ = spatio_temporal_attend(q, z, p, grid_size=2)
    doubled = np.concatenate([z, z], axis=0)
    out2, _ = spatio_temporal_attend(q, doubled, p, grid_size=2)
    np.testing.assert_allclose(out2, out1, atol=1e-9)


def test_spatio_temporal_permutation_invariance_and_grid_shape():
    p = make_params()
    q = rng.standard_normal(6)
    z = rng.standard_normal((12, 6))  # 3 frames of 2x2
    out, grid = spatio_temporal_attend(q, z, p, grid_size=2)
    assert grid.shape == (3, 2, 2)
    perm = rng.permutation(12)
    out_p, _ = spatio_temporal_attend(q, z[perm], p, grid_size=2)
    np.testing.assert_allclose(out_p, out, atol=1e-9)


def test_spatio_temporal_bad_row_count():
    p = make_params()
    with pytest.raises(InvalidInputError):
        spatio_temporal_attend(rng.standard_normal(6), rng.standard_normal((7, 6)),
                               p, grid_size=2)


def test_mean_pool():
    np.testing.assert_allclose(mean_pool(np.array([[0.0, 0.0], [2.0, 2.0]])), [1.0, 1.0])
    row = rng.standard_normal((1, 5))
    np.testing.assert_allclose(mean_pool(row), row[0])
    z = rng.standard_normal((7, 3))
    np.testing.assert_allclose(mean_pool(z), z.sum(axis=0) / 7, atol=1e-12)
    with pytest.raises(InvalidInputError):
        mean_pool(np.zeros((0, 3)))
