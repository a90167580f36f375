import itertools
import math

import numpy as np
import pytest

from mixitkit import autodiff as ad
from mixitkit.classifier import (ClassifierParams, SourceLabels, SourcePredictions,
                                 ac_ce, ac_ce_terms, classifier_forward, exact_ce,
                                 exact_ce_terms, init_classifier_params,
                                 labels_from_assignment, mi_ce, mi_ce_terms)
from mixitkit.errors import InvalidInputError
from mixitkit.mixit import MixingMatrix, enumerate_assignments

rng = np.random.default_rng(21)


def oracle_exact(y, p):
    return float(sum(-yi * math.log(pi) - (1 - yi) * math.log(1 - pi)
                     for yi, pi in zip(y, p)))


def oracle_mi(y, p):
    positives = [m for m, ym in enumerate(y) if ym == 1]
    off = sum(-math.log(1 - p[m]) for m in range(len(y)) if m not in positives)
    return min(-math.log(p[m]) + off for m in positives)


def oracle_ac(y, p):
    positives = [m for m, ym in enumerate(y) if ym == 1]
    best = math.inf
    for size in range(1, len(positives) + 1):
        for subset in itertools.combinations(positives, size):
            inside = set(subset)
            val = sum(-math.log(p[m]) if m in inside else -math.log(1 - p[m])
                      for m in range(len(y)))
            best = min(best, val)
    return best


def test_classifier_forward_zero_weights():
    p = ClassifierParams(w=np.zeros((9, 1)), b=np.zeros(1))
    out = classifier_forward(np.zeros(3), np.zeros(3), np.zeros(3), p)
    assert out == pytest.approx(0.5)


def test_classifier_forward_large_bias():
    p = ClassifierParams(w=np.zeros((9, 1)), b=np.array([10.0]))
    out = classifier_forward(rng.standard_normal(3), rng.standard_normal(3),
                             rng.standard_normal(3), p)
    assert out == pytest.approx(1.0 / (1.0 + math.exp(-10.0)), abs=1e-9)


def test_classifier_forward_matches_dot_logistic():
    p = init_classifier_params(rng, 9)
    zg, za, zav = rng.standard_normal(3), rng.standard_normal(3), rng.standard_normal(3)
    out = classifier_forward(zg, za, zav, p)
    logit = np.concatenate([zg, za, zav]) @ p.w[:, 0] + p.b[0]
    assert out == pytest.approx(1.0 / (1.0 + math.exp(-logit)), abs=1e-9)


def test_classifier_forward_shape_mismatch():
    p = ClassifierParams(w=np.zeros((8, 1)), b=np.zeros(1))
    with pytest.raises(InvalidInputError):
        classifier_forward(np.zeros(3), np.zeros(3), np.zeros(3), p)


def test_labels_from_assignment():
    a = MixingMatrix(np.array([[1, 0], [0, 1]]))
    labels = labels_from_assignment(a)
    np.testing.assert_array_equal(labels.y, [1, 0])
    assert labels.positive_set == (0,)
    empty_top = MixingMatrix(np.array([[0, 0, 0], [1, 1, 1]]))
    labels = labels_from_assignment(empty_top)
    assert labels.positive_set == ()
    for a in enumerate_assignments(4)[:6]:
        np.testing.assert_array_equal(labels_from_assignment(a).y, a.entries[0])


def test_exact_ce_perfect_prediction():
    labels = SourceLabels([1, 0])
    preds = SourcePredictions([1.0, 0.0])  # clamps to (1-eps, eps)
    assert exact_ce(labels, preds) <= 1e-6


def test_exact_ce_hand_case():
    val = exact_ce(SourceLabels([1, 1, 0]), SourcePredictions([0.9, 0.6, 0.1]))
    assert val == pytest.approx(0.7216, abs=1e-4)


def test_exact_ce_uniform():
    val = exact_ce(SourceLabels([0, 0, 0, 0]), SourcePredictions([0.5] * 4))
    assert val == pytest.approx(4 * math.log(2), abs=1e-9)


def test_exact_ce_length_mismatch():
    with pytest.raises(InvalidInputError):
        exact_ce(SourceLabels([1, 0]), SourcePredictions([0.5, 0.5, 0.5]))


def test_mi_ce_hand_case():
    val = mi_ce(SourceLabels([1, 1, 0]), SourcePredictions([0.9, 0.6, 0.1]))
    assert val == pytest.approx(0.2107, abs=1e-4)


def test_mi_ce_perfect_single_positive():
    val = mi_ce(SourceLabels([1, 0, 0]), SourcePredictions([1.0, 0.0, 0.0]))
    assert val <= 1e-6


def test_mi_ce_matches_oracle():
    for _ in range(50):
        m = 5
        y = rng.integers(0, 2, size=m)
        if not y.any():
            y[rng.integers(m)] = 1
        p = rng.uniform(0.01, 0.99, size=m)
        assert mi_ce(SourceLabels(y), SourcePredictions(p)) == pytest.approx(
            oracle_mi(y, p), abs=1e-9)


def test_ac_ce_hand_case():
    val = ac_ce(SourceLabels([1, 1, 0]), SourcePredictions([0.9, 0.6, 0.1]))
    assert val == pytest.approx(0.7216, abs=1e-4)


def test_ac_ce_single_positive_equals_exact_indicator():
    y = np.array([0, 1, 0, 0])
    p = rng.uniform(0.05, 0.95, size=4)
    assert ac_ce(SourceLabels(y), SourcePredictions(p)) == pytest.approx(
        exact_ce(SourceLabels(y), SourcePredictions(p)), abs=1e-12)


def test_ac_ce_matches_powerset_oracle():
    for _ in range(50):
        m = 6
        y = np.zeros(m, dtype=int)
        y[rng.choice(m, size=3, replace=False)] = 1
        p = rng.uniform(0.01, 0.99, size=m)
        assert ac_ce(SourceLabels(y), SourcePredictions(p)) == pytest.approx(
            oracle_ac(y, p), abs=1e-9)


def test_empty_positive_set_falls_back_to_exact_zero_labels():
    y = np.zeros(4, dtype=int)
    p = rng.uniform(0.05, 0.95, size=4)
    expected = exact_ce(SourceLabels(y), SourcePredictions(p))
    assert mi_ce(SourceLabels(y), SourcePredictions(p)) == pytest.approx(expected)
    assert ac_ce(SourceLabels(y), SourcePredictions(p)) == pytest.approx(expected)


def test_ac_ce_enumeration_guard():
    y = np.ones(13, dtype=int)
    p = np.full(13, 0.5)
    with pytest.raises(InvalidInputError):
        ac_ce(SourceLabels(y), SourcePredictions(p))


def test_loss_ordering_property():
    # mi <= ac <= exact on random instances with nonempty positive sets
    for _ in range(1000):
        m = int(rng.integers(1, 9))
        y = rng.integers(0, 2, size=m)
        if not y.any():
            y[rng.integers(m)] = 1
        p = rng.uniform(0.01, 0.99, size=m)
        labels, preds = SourceLabels(y), SourcePredictions(p)
        lo, mid, hi = mi_ce(labels, preds), ac_ce(labels, preds), exact_ce(labels, preds)
        assert lo <= mid + 1e-12
        assert mid <= hi + 1e-12
        assert lo >= 0 and mid >= 0 and hi >= 0


def test_loss_gradients_match_finite_differences():
    h = 1e-6
    for builder in (exact_ce_terms, mi_ce_terms, ac_ce_terms):
        y = np.array([1, 0, 1, 0, 1])
        p0 = rng.uniform(0.15, 0.85, size=5)
        leaf = ad.Tensor(p0.copy())
        grads = ad.backward(builder(y, leaf))
        analytic = ad.grad_of(grads, leaf)
        numeric = np.zeros(5)
        for i in range(5):
            hi_p, lo_p = p0.copy(), p0.copy()
            hi_p[i] += h
            lo_p[i] -= h
            numeric[i] = (float(builder(y, ad.Tensor(hi_p)).value)
                          - float(builder(y, ad.Tensor(lo_p)).value)) / (2 * h)
        scale = np.maximum(np.abs(numeric), 1e-3)
        assert np.max(np.abs(analytic - numeric) / scale) <= 1e-4
